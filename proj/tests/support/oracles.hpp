#pragma once

#include <complex>
#include <span>
#include <vector>

#include "rppg/conv3d.hpp"
#include "rppg/tensor.hpp"

// Independent reference implementations the tests compare against. These
// stay deliberately naive and share no code with the library paths they
// check.
namespace rppg::oracle {

// Direct six-nested-loop convolution with explicit zero padding.
Tensor conv3d_reference(const Tensor& input, const Tensor& kernel, const Conv3dSpec& spec);

// O(n^2) DFT.
std::vector<std::complex<double>> dft_direct(std::span<const double> x);

// Peak frequency of a zero-padded direct DFT restricted to [lo, hi] Hz.
double dft_peak_freq(std::span<const double> x, double fs, double lo_hz, double hi_hz,
                     int64_t zero_pad_factor);

// Dense solve of (I + lambda^2 D2'D2) trend = x via Eigen LDLT; returns
// x - trend.
std::vector<double> detrend_dense_reference(std::span<const double> x, double lambda);

double mean_of(std::span<const double> x);
double variance_of(std::span<const double> x);

}  // namespace rppg::oracle
