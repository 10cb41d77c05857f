#pragma once

#include <complex>
#include <span>
#include <vector>

namespace rppg {

// In-place FFT for any length: iterative radix-2 when the length is a power
// of two, Bluestein's chirp-z otherwise.
void fft(std::vector<std::complex<double>>& values, bool inverse);

std::vector<std::complex<double>> fft_real(std::span<const double> x);

// Inverse of fft_real; returns the real parts of the inverse transform.
std::vector<double> ifft_real(std::vector<std::complex<double>> spectrum);

}  // namespace rppg
