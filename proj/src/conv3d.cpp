#include "rppg/conv3d.hpp"

#include <algorithm>
#include <string>

#include "rppg/errors.hpp"

namespace rppg {

namespace {

int64_t floor_div(int64_t a, int64_t b) {
  const int64_t q = a / b;
  const int64_t r = a % b;
  return (r != 0 && (r < 0) != (b < 0)) ? q - 1 : q;
}

int64_t ceil_div(int64_t a, int64_t b) { return -floor_div(-a, b); }

// Inclusive range of output indices whose sampled input index
// o*stride - pad + k lies inside [0, in_ext).
struct OutRange {
  int64_t lo;
  int64_t hi;
  bool empty() const { return lo > hi; }
};

OutRange valid_out_range(int64_t in_ext, int64_t out_ext, int64_t stride, int64_t pad,
                         int64_t k) {
  return {std::max<int64_t>(0, ceil_div(pad - k, stride)),
          std::min(out_ext - 1, floor_div(in_ext - 1 + pad - k, stride))};
}

const char* kAxisNames[3] = {"T", "H", "W"};

}  // namespace

Conv3dDims conv3d_dims(const Shape& input, const Shape& kernel, const Conv3dSpec& spec) {
  if (input.size() != 5) {
    throw ContractError("conv3d input must be rank 5 [N,C,T,H,W], got " + shape_str(input));
  }
  if (kernel.size() != 5) {
    throw ContractError("conv3d kernel must be rank 5 [K,C,kT,kH,kW], got " + shape_str(kernel));
  }
  if (input[1] != kernel[1]) {
    throw ContractError("conv3d channel axis mismatch: input C=" + std::to_string(input[1]) +
                        ", kernel C=" + std::to_string(kernel[1]));
  }
  Conv3dDims d;
  d.batch = input[0];
  d.in_channels = input[1];
  d.out_channels = kernel[0];
  d.stride = spec.stride;
  d.pad = spec.pad;
  for (int a = 0; a < 3; ++a) {
    if (spec.stride[a] < 1) {
      throw ConfigError(std::string("conv3d stride on axis ") + kAxisNames[a] +
                        " must be >= 1");
    }
    if (spec.pad[a] < 0) {
      throw ConfigError(std::string("conv3d padding on axis ") + kAxisNames[a] +
                        " must be >= 0");
    }
    d.in_ext[a] = input[2 + a];
    d.k_ext[a] = kernel[2 + a];
    const int64_t out = floor_div(d.in_ext[a] + 2 * d.pad[a] - d.k_ext[a], d.stride[a]) + 1;
    if (out < 1) {
      throw ConfigError(std::string("conv3d output extent on axis ") + kAxisNames[a] +
                        " is non-positive (" + std::to_string(out) + ")");
    }
    d.out_ext[a] = out;
  }
  return d;
}

Tensor conv3d_forward(const Tensor& input, const Tensor& kernel, const Conv3dSpec& spec) {
  const Conv3dDims d = conv3d_dims(input.shape(), kernel.shape(), spec);
  std::vector<double> out(static_cast<size_t>(shape_numel(d.out_shape())), 0.0);

  const double* in = input.data().data();
  const double* ker = kernel.data().data();

  const int64_t in_sh = d.in_ext[2];
  const int64_t in_st = d.in_ext[1] * in_sh;
  const int64_t in_sc = d.in_ext[0] * in_st;
  const int64_t in_sn = d.in_channels * in_sc;
  const int64_t out_sh = d.out_ext[2];
  const int64_t out_st = d.out_ext[1] * out_sh;
  const int64_t out_sc = d.out_ext[0] * out_st;
  const int64_t out_sn = d.out_channels * out_sc;
  const auto [st, sh, sw] = d.stride;
  const auto [pt, ph, pw] = d.pad;

  // Tap-major loops: each nonzero kernel tap is applied as one shifted
  // volume update with a contiguous inner loop. The (c,kt,kh,kw) tap order
  // matches the per-element summation order of the naive reference, so the
  // two accumulate in the same sequence.
  int64_t tap = 0;
  for (int64_t k = 0; k < d.out_channels; ++k) {
    for (int64_t c = 0; c < d.in_channels; ++c) {
      for (int64_t kt = 0; kt < d.k_ext[0]; ++kt) {
        for (int64_t kh = 0; kh < d.k_ext[1]; ++kh) {
          for (int64_t kw = 0; kw < d.k_ext[2]; ++kw, ++tap) {
            const double w = ker[tap];
            if (w == 0.0) continue;
            const OutRange rt = valid_out_range(d.in_ext[0], d.out_ext[0], st, pt, kt);
            const OutRange rh = valid_out_range(d.in_ext[1], d.out_ext[1], sh, ph, kh);
            const OutRange rw = valid_out_range(d.in_ext[2], d.out_ext[2], sw, pw, kw);
            if (rt.empty() || rh.empty() || rw.empty()) continue;
            const int64_t count = rw.hi - rw.lo + 1;
            for (int64_t n = 0; n < d.batch; ++n) {
              const double* in_nc = in + n * in_sn + c * in_sc;
              double* out_nk = out.data() + n * out_sn + k * out_sc;
              for (int64_t ot = rt.lo; ot <= rt.hi; ++ot) {
                const double* in_t = in_nc + (ot * st - pt + kt) * in_st;
                double* out_t = out_nk + ot * out_st;
                for (int64_t oh = rh.lo; oh <= rh.hi; ++oh) {
                  const double* ip = in_t + (oh * sh - ph + kh) * in_sh + (rw.lo * sw - pw + kw);
                  double* op = out_t + oh * out_sh + rw.lo;
                  if (sw == 1) {
                    for (int64_t i = 0; i < count; ++i) op[i] += w * ip[i];
                  } else {
                    for (int64_t i = 0; i < count; ++i) op[i] += w * ip[i * sw];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
  return Tensor::from_data(d.out_shape(), std::move(out));
}

void conv3d_grad_input(std::span<const double> grad_out, std::span<const double> kernel,
                       const Conv3dDims& d, std::span<double> grad_input) {
  const int64_t in_sh = d.in_ext[2];
  const int64_t in_st = d.in_ext[1] * in_sh;
  const int64_t in_sc = d.in_ext[0] * in_st;
  const int64_t in_sn = d.in_channels * in_sc;
  const int64_t out_sh = d.out_ext[2];
  const int64_t out_st = d.out_ext[1] * out_sh;
  const int64_t out_sc = d.out_ext[0] * out_st;
  const int64_t out_sn = d.out_channels * out_sc;
  const int64_t k_sc = d.k_ext[0] * d.k_ext[1] * d.k_ext[2];
  const int64_t k_sk = d.in_channels * k_sc;
  const auto [st, sh, sw] = d.stride;
  const auto [pt, ph, pw] = d.pad;

  for (int64_t c = 0; c < d.in_channels; ++c) {
    for (int64_t k = 0; k < d.out_channels; ++k) {
      int64_t tap = k * k_sk + c * k_sc;
      for (int64_t kt = 0; kt < d.k_ext[0]; ++kt) {
        for (int64_t kh = 0; kh < d.k_ext[1]; ++kh) {
          for (int64_t kw = 0; kw < d.k_ext[2]; ++kw, ++tap) {
            const double w = kernel[tap];
            if (w == 0.0) continue;
            const OutRange rt = valid_out_range(d.in_ext[0], d.out_ext[0], st, pt, kt);
            const OutRange rh = valid_out_range(d.in_ext[1], d.out_ext[1], sh, ph, kh);
            const OutRange rw = valid_out_range(d.in_ext[2], d.out_ext[2], sw, pw, kw);
            if (rt.empty() || rh.empty() || rw.empty()) continue;
            const int64_t count = rw.hi - rw.lo + 1;
            for (int64_t n = 0; n < d.batch; ++n) {
              double* gin_nc = grad_input.data() + n * in_sn + c * in_sc;
              const double* gout_nk = grad_out.data() + n * out_sn + k * out_sc;
              for (int64_t ot = rt.lo; ot <= rt.hi; ++ot) {
                double* gin_t = gin_nc + (ot * st - pt + kt) * in_st;
                const double* gout_t = gout_nk + ot * out_st;
                for (int64_t oh = rh.lo; oh <= rh.hi; ++oh) {
                  double* gp = gin_t + (oh * sh - ph + kh) * in_sh + (rw.lo * sw - pw + kw);
                  const double* op = gout_t + oh * out_sh + rw.lo;
                  if (sw == 1) {
                    for (int64_t i = 0; i < count; ++i) gp[i] += w * op[i];
                  } else {
                    for (int64_t i = 0; i < count; ++i) gp[i * sw] += w * op[i];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

void conv3d_grad_kernel(std::span<const double> grad_out, std::span<const double> input,
                        const Conv3dDims& d, std::span<double> grad_kernel) {
  const int64_t in_sh = d.in_ext[2];
  const int64_t in_st = d.in_ext[1] * in_sh;
  const int64_t in_sc = d.in_ext[0] * in_st;
  const int64_t in_sn = d.in_channels * in_sc;
  const int64_t out_sh = d.out_ext[2];
  const int64_t out_st = d.out_ext[1] * out_sh;
  const int64_t out_sc = d.out_ext[0] * out_st;
  const int64_t out_sn = d.out_channels * out_sc;
  const auto [st, sh, sw] = d.stride;
  const auto [pt, ph, pw] = d.pad;

  int64_t tap = 0;
  for (int64_t k = 0; k < d.out_channels; ++k) {
    for (int64_t c = 0; c < d.in_channels; ++c) {
      for (int64_t kt = 0; kt < d.k_ext[0]; ++kt) {
        for (int64_t kh = 0; kh < d.k_ext[1]; ++kh) {
          for (int64_t kw = 0; kw < d.k_ext[2]; ++kw, ++tap) {
            const OutRange rt = valid_out_range(d.in_ext[0], d.out_ext[0], st, pt, kt);
            const OutRange rh = valid_out_range(d.in_ext[1], d.out_ext[1], sh, ph, kh);
            const OutRange rw = valid_out_range(d.in_ext[2], d.out_ext[2], sw, pw, kw);
            if (rt.empty() || rh.empty() || rw.empty()) continue;
            const int64_t count = rw.hi - rw.lo + 1;
            double acc = 0.0;
            for (int64_t n = 0; n < d.batch; ++n) {
              const double* in_nc = input.data() + n * in_sn + c * in_sc;
              const double* gout_nk = grad_out.data() + n * out_sn + k * out_sc;
              for (int64_t ot = rt.lo; ot <= rt.hi; ++ot) {
                const double* in_t = in_nc + (ot * st - pt + kt) * in_st;
                const double* gout_t = gout_nk + ot * out_st;
                for (int64_t oh = rh.lo; oh <= rh.hi; ++oh) {
                  const double* ip = in_t + (oh * sh - ph + kh) * in_sh + (rw.lo * sw - pw + kw);
                  const double* op = gout_t + oh * out_sh + rw.lo;
                  if (sw == 1) {
                    for (int64_t i = 0; i < count; ++i) acc += op[i] * ip[i];
                  } else {
                    for (int64_t i = 0; i < count; ++i) acc += op[i] * ip[i * sw];
                  }
                }
              }
            }
            grad_kernel[tap] += acc;
          }
        }
      }
    }
  }
}

}  // namespace rppg
