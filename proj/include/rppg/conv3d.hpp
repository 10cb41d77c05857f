#pragma once

#include <array>
#include <span>

#include "rppg/tensor.hpp"

namespace rppg {

struct Conv3dSpec {
  std::array<int64_t, 3> stride{1, 1, 1};
  std::array<int64_t, 3> pad{0, 0, 0};
};

struct Conv3dDims {
  int64_t batch = 0;
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  std::array<int64_t, 3> in_ext{};   // T, H, W
  std::array<int64_t, 3> k_ext{};    // kT, kH, kW
  std::array<int64_t, 3> out_ext{};  // T', H', W'
  std::array<int64_t, 3> stride{};
  std::array<int64_t, 3> pad{};

  Shape out_shape() const {
    return {batch, out_channels, out_ext[0], out_ext[1], out_ext[2]};
  }
};

// Validates an input [N,C,T,H,W] against a kernel [K,C,kT,kH,kW] and computes
// output extents floor((in + 2*pad - k)/stride) + 1. Throws ContractError on
// a shape mismatch (naming the offending axis) and ConfigError when an output
// extent would be non-positive.
Conv3dDims conv3d_dims(const Shape& input, const Shape& kernel, const Conv3dSpec& spec);

// Zero-padded cross-correlation over the three trailing axes. Kernel taps
// with value exactly 0 contribute nothing and are skipped, so a pruned model
// runs in time proportional to its kept weights.
Tensor conv3d_forward(const Tensor& input, const Tensor& kernel, const Conv3dSpec& spec);

// Accumulates dLoss/dInput into grad_input (sized like the input).
void conv3d_grad_input(std::span<const double> grad_out, std::span<const double> kernel,
                       const Conv3dDims& dims, std::span<double> grad_input);

// Accumulates dLoss/dKernel into grad_kernel (sized like the kernel).
void conv3d_grad_kernel(std::span<const double> grad_out, std::span<const double> input,
                        const Conv3dDims& dims, std::span<double> grad_kernel);

}  // namespace rppg
