#include "rppg/video.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "rppg/errors.hpp"
#include "rppg/rng.hpp"

namespace rppg {

namespace {

constexpr char kMagic[4] = {'R', 'P', 'G', 'C'};
constexpr uint8_t kVersion = 1;
constexpr size_t kHeaderSize = 4 + 1 + 1 + 2 + 4 + 4 + 4 + 4;

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<uint32_t>(v)); }

uint16_t get_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_u32(p)); }

}  // namespace

VideoClip make_clip(Tensor frames, double fps) {
  const Shape& s = frames.shape();
  if (s.size() != 4 || s[3] != 3) {
    throw ContractError("clip frames must be [T,H,W,3], got " + shape_str(s));
  }
  if (!(fps > 0.0) || !std::isfinite(fps)) {
    throw ContractError("clip fps must be finite and positive");
  }
  for (int64_t i = 0; i < frames.numel(); ++i) {
    const double v = frames[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ContractError("clip value " + std::to_string(v) + " outside [0,1]");
    }
  }
  return VideoClip{std::move(frames), fps};
}

VideoClip read_clip(const std::filesystem::path& path, ClipDtype* dtype_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open clip file " + path.string());

  unsigned char header[kHeaderSize];
  in.read(reinterpret_cast<char*>(header), kHeaderSize);
  if (static_cast<size_t>(in.gcount()) != kHeaderSize) {
    throw IoError("truncated clip header in " + path.string() + ": got " +
                  std::to_string(in.gcount()) + " of " + std::to_string(kHeaderSize) +
                  " bytes");
  }
  if (std::memcmp(header, kMagic, 4) != 0) {
    throw FormatError("bad clip magic in " + path.string());
  }
  if (header[4] != kVersion) {
    throw FormatError("unsupported clip version " + std::to_string(header[4]));
  }
  const uint8_t dtype_raw = header[5];
  if (dtype_raw > 1) throw FormatError("unknown clip dtype " + std::to_string(dtype_raw));
  if (get_u16(header + 6) != 0) throw FormatError("nonzero reserved field");
  const ClipDtype dtype = static_cast<ClipDtype>(dtype_raw);
  const double fps = static_cast<double>(get_f32(header + 8));
  const uint32_t t = get_u32(header + 12);
  const uint32_t h = get_u32(header + 16);
  const uint32_t w = get_u32(header + 20);
  if (t == 0 || h == 0 || w == 0) throw FormatError("zero extent in clip header");
  if (!(fps > 0.0) || !std::isfinite(fps)) throw FormatError("invalid fps in clip header");

  const size_t count = static_cast<size_t>(t) * h * w * 3;
  const size_t value_size = dtype == ClipDtype::U8 ? 1 : 4;
  std::vector<unsigned char> payload(count * value_size);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  const size_t got = static_cast<size_t>(in.gcount());
  if (got != payload.size()) {
    throw IoError("truncated clip payload in " + path.string() + " at byte offset " +
                  std::to_string(kHeaderSize + got) + ": expected " +
                  std::to_string(kHeaderSize + payload.size()) + " bytes total");
  }

  std::vector<double> values(count);
  if (dtype == ClipDtype::U8) {
    for (size_t i = 0; i < count; ++i) values[i] = payload[i] / 255.0;
  } else {
    for (size_t i = 0; i < count; ++i) {
      const float f = get_f32(payload.data() + 4 * i);
      if (!(f >= 0.0f && f <= 1.0f)) {
        throw FormatError("clip value " + std::to_string(f) + " outside [0,1] at index " +
                          std::to_string(i));
      }
      values[i] = static_cast<double>(f);
    }
  }
  if (dtype_out) *dtype_out = dtype;
  return make_clip(Tensor::from_data({t, h, w, 3}, std::move(values)), fps);
}

void write_clip(const VideoClip& clip, const std::filesystem::path& path, ClipDtype dtype) {
  std::string out;
  out.reserve(kHeaderSize + static_cast<size_t>(clip.frames.numel()) *
                                (dtype == ClipDtype::U8 ? 1 : 4));
  out.append(kMagic, 4);
  out.push_back(static_cast<char>(kVersion));
  out.push_back(static_cast<char>(dtype));
  put_u16(out, 0);
  put_f32(out, static_cast<float>(clip.fps));
  put_u32(out, static_cast<uint32_t>(clip.frame_count()));
  put_u32(out, static_cast<uint32_t>(clip.height()));
  put_u32(out, static_cast<uint32_t>(clip.width()));
  for (int64_t i = 0; i < clip.frames.numel(); ++i) {
    if (dtype == ClipDtype::U8) {
      out.push_back(static_cast<char>(std::lround(clip.frames[i] * 255.0)));
    } else {
      put_f32(out, static_cast<float>(clip.frames[i]));
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to " + path.string());
}

VideoClip degrade(const VideoClip& clip, int64_t factor, double noise_sigma, uint64_t seed) {
  if (factor < 1) throw ConfigError("degrade factor must be >= 1");
  if (noise_sigma < 0.0) throw ConfigError("degrade noise_sigma must be >= 0");
  const int64_t t_ext = clip.frame_count();
  const int64_t h_ext = clip.height();
  const int64_t w_ext = clip.width();
  if (h_ext % factor != 0) {
    throw ConfigError("degrade: height " + std::to_string(h_ext) +
                      " not divisible by factor " + std::to_string(factor));
  }
  if (w_ext % factor != 0) {
    throw ConfigError("degrade: width " + std::to_string(w_ext) +
                      " not divisible by factor " + std::to_string(factor));
  }
  if (factor == 1 && noise_sigma == 0.0) return clip;

  Rng rng(seed);
  const int64_t bh = h_ext / factor;
  const int64_t bw = w_ext / factor;
  const double inv_block = 1.0 / static_cast<double>(factor * factor);
  std::vector<double> out(static_cast<size_t>(clip.frames.numel()));
  const double* src = clip.frames.data().data();
  const int64_t row = w_ext * 3;
  const int64_t frame = h_ext * row;

  for (int64_t t = 0; t < t_ext; ++t) {
    for (int64_t by = 0; by < bh; ++by) {
      for (int64_t bx = 0; bx < bw; ++bx) {
        for (int64_t c = 0; c < 3; ++c) {
          double acc = 0.0;
          for (int64_t dy = 0; dy < factor; ++dy) {
            const double* p = src + t * frame + (by * factor + dy) * row + bx * factor * 3 + c;
            for (int64_t dx = 0; dx < factor; ++dx) acc += p[dx * 3];
          }
          double v = acc * inv_block;
          if (noise_sigma > 0.0) v += noise_sigma * rng.gaussian();
          v = std::clamp(v, 0.0, 1.0);
          for (int64_t dy = 0; dy < factor; ++dy) {
            double* q = out.data() + t * frame + (by * factor + dy) * row + bx * factor * 3 + c;
            for (int64_t dx = 0; dx < factor; ++dx) q[dx * 3] = v;
          }
        }
      }
    }
  }
  return VideoClip{Tensor::from_data(clip.frames.shape(), std::move(out)), clip.fps};
}

VideoClip crop_roi(const VideoClip& clip, const RoiBox& box) {
  if (box.top < 0 || box.left < 0 || box.height < 1 || box.width < 1 ||
      box.top + box.height > clip.height() || box.left + box.width > clip.width()) {
    throw ContractError("ROI box outside frame bounds");
  }
  const int64_t t_ext = clip.frame_count();
  std::vector<double> out(static_cast<size_t>(t_ext * box.height * box.width * 3));
  const double* src = clip.frames.data().data();
  const int64_t row = clip.width() * 3;
  const int64_t frame = clip.height() * row;
  double* dst = out.data();
  for (int64_t t = 0; t < t_ext; ++t) {
    for (int64_t y = 0; y < box.height; ++y) {
      const double* p = src + t * frame + (box.top + y) * row + box.left * 3;
      std::memcpy(dst, p, static_cast<size_t>(box.width * 3) * sizeof(double));
      dst += box.width * 3;
    }
  }
  return VideoClip{Tensor::from_data({t_ext, box.height, box.width, 3}, std::move(out)),
                   clip.fps};
}

RoiBox read_roi_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open ROI file " + path.string());
  RoiBox box;
  if (!(in >> box.top >> box.left >> box.height >> box.width)) {
    throw FormatError("ROI file " + path.string() +
                      " must contain one line: top left height width");
  }
  if (box.top < 0 || box.left < 0 || box.height < 1 || box.width < 1) {
    throw FormatError("ROI file " + path.string() + " has invalid box values");
  }
  return box;
}

Tensor clip_to_input(const VideoClip& clip) {
  const int64_t t_ext = clip.frame_count();
  const int64_t h_ext = clip.height();
  const int64_t w_ext = clip.width();
  std::vector<double> out(static_cast<size_t>(clip.frames.numel()));
  const double* src = clip.frames.data().data();
  const int64_t plane = t_ext * h_ext * w_ext;
  int64_t idx = 0;
  for (int64_t t = 0; t < t_ext; ++t) {
    for (int64_t y = 0; y < h_ext; ++y) {
      for (int64_t x = 0; x < w_ext; ++x) {
        const int64_t spatial = (t * h_ext + y) * w_ext + x;
        for (int64_t c = 0; c < 3; ++c) {
          out[static_cast<size_t>(c * plane + spatial)] = src[idx++];
        }
      }
    }
  }
  return Tensor::from_data({1, 3, t_ext, h_ext, w_ext}, std::move(out));
}

VideoClip input_to_clip(const Tensor& input, double fps) {
  const Shape& s = input.shape();
  if (s.size() != 5 || s[0] != 1 || s[1] != 3) {
    throw ContractError("network output must be [1,3,T,H,W], got " + shape_str(s));
  }
  const int64_t t_ext = s[2];
  const int64_t h_ext = s[3];
  const int64_t w_ext = s[4];
  const int64_t plane = t_ext * h_ext * w_ext;
  std::vector<double> out(static_cast<size_t>(input.numel()));
  const double* src = input.data().data();
  int64_t idx = 0;
  for (int64_t t = 0; t < t_ext; ++t) {
    for (int64_t y = 0; y < h_ext; ++y) {
      for (int64_t x = 0; x < w_ext; ++x) {
        const int64_t spatial = (t * h_ext + y) * w_ext + x;
        for (int64_t c = 0; c < 3; ++c) {
          out[static_cast<size_t>(idx++)] = src[c * plane + spatial];
        }
      }
    }
  }
  return make_clip(Tensor::from_data({t_ext, h_ext, w_ext, 3}, std::move(out)), fps);
}

}  // namespace rppg
