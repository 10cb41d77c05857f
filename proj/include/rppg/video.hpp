#pragma once

#include <cstdint>
#include <filesystem>

#include "rppg/tensor.hpp"

namespace rppg {

// A decoded clip: frames [T,H,W,3] with values in [0,1], plus a frame rate.
struct VideoClip {
  Tensor frames;
  double fps = 0.0;

  int64_t frame_count() const { return frames.shape()[0]; }
  int64_t height() const { return frames.shape()[1]; }
  int64_t width() const { return frames.shape()[2]; }
};

// Validates rank, channel count, fps and the [0,1] value range.
VideoClip make_clip(Tensor frames, double fps);

struct RoiBox {
  int64_t top = 0;
  int64_t left = 0;
  int64_t height = 0;
  int64_t width = 0;
};

enum class ClipDtype : uint8_t { U8 = 0, F32 = 1 };

// Clip container, little-endian:
//   magic "RPGC", version u8=1, dtype u8 (0=u8, 1=f32), reserved u16=0,
//   fps f32, T u32, H u32, W u32, then T*H*W*3 values in frame-major,
//   row-major, channel-last order.
VideoClip read_clip(const std::filesystem::path& path, ClipDtype* dtype_out = nullptr);
void write_clip(const VideoClip& clip, const std::filesystem::path& path,
                ClipDtype dtype = ClipDtype::F32);

// Block-mean downsample by `factor` per spatial axis, add seeded Gaussian
// noise of standard deviation noise_sigma, clamp to [0,1], then repeat each
// low-resolution pixel back up so the output keeps the input extents.
VideoClip degrade(const VideoClip& clip, int64_t factor, double noise_sigma, uint64_t seed);

VideoClip crop_roi(const VideoClip& clip, const RoiBox& box);

// Sidecar with a single ASCII line "top left height width".
RoiBox read_roi_file(const std::filesystem::path& path);

// Layout changes between the clip format [T,H,W,3] and the network input
// [1,3,T,H,W].
Tensor clip_to_input(const VideoClip& clip);
VideoClip input_to_clip(const Tensor& input, double fps);

}  // namespace rppg
