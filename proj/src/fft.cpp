#include "rppg/fft.hpp"

#include <cmath>
#include <numbers>

#include "rppg/errors.hpp"

namespace rppg {

namespace {

bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Iterative Cooley-Tukey, n a power of two.
void fft_pow2(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double angle = (inverse ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> step(std::cos(angle), std::sin(angle));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= step;
      }
    }
  }
}

// Bluestein's algorithm: expresses a length-n DFT as a convolution that is
// evaluated with a power-of-two FFT. Chirp angles are reduced mod 2n to keep
// the trigonometric arguments small.
void fft_bluestein(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  const size_t m = next_pow2(2 * n - 1);
  const double sign = inverse ? 1.0 : -1.0;

  std::vector<std::complex<double>> chirp(n);
  for (size_t k = 0; k < n; ++k) {
    const size_t kk = (k * k) % (2 * n);
    const double angle = sign * std::numbers::pi * static_cast<double>(kk) /
                         static_cast<double>(n);
    chirp[k] = {std::cos(angle), std::sin(angle)};
  }

  std::vector<std::complex<double>> u(m, {0.0, 0.0});
  std::vector<std::complex<double>> v(m, {0.0, 0.0});
  for (size_t k = 0; k < n; ++k) u[k] = a[k] * chirp[k];
  v[0] = std::conj(chirp[0]);
  for (size_t k = 1; k < n; ++k) {
    v[k] = std::conj(chirp[k]);
    v[m - k] = std::conj(chirp[k]);
  }
  fft_pow2(u, false);
  fft_pow2(v, false);
  for (size_t k = 0; k < m; ++k) u[k] *= v[k];
  fft_pow2(u, true);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (size_t k = 0; k < n; ++k) a[k] = u[k] * inv_m * chirp[k];
}

}  // namespace

void fft(std::vector<std::complex<double>>& values, bool inverse) {
  const size_t n = values.size();
  if (n == 0) throw ContractError("fft of empty sequence");
  if (n == 1) return;
  if (is_pow2(n)) {
    fft_pow2(values, inverse);
  } else {
    fft_bluestein(values, inverse);
  }
  if (inverse) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto& v : values) v *= inv_n;
  }
}

std::vector<std::complex<double>> fft_real(std::span<const double> x) {
  std::vector<std::complex<double>> a(x.size());
  for (size_t i = 0; i < x.size(); ++i) a[i] = {x[i], 0.0};
  fft(a, false);
  return a;
}

std::vector<double> ifft_real(std::vector<std::complex<double>> spectrum) {
  fft(spectrum, true);
  std::vector<double> out(spectrum.size());
  for (size_t i = 0; i < spectrum.size(); ++i) out[i] = spectrum[i].real();
  return out;
}

}  // namespace rppg
