#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "rppg/errors.hpp"
#include "rppg/rng.hpp"
#include "rppg/video.hpp"

using namespace rppg;

namespace {

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "rppg_video_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
}

void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

// Header bytes for a u8 clip, assembled by hand.
std::vector<unsigned char> u8_clip_bytes(float fps, uint32_t t, uint32_t h, uint32_t w,
                                         unsigned char fill) {
  std::vector<unsigned char> bytes = {'R', 'P', 'G', 'C', 1, 0, 0, 0};
  uint32_t fps_bits;
  std::memcpy(&fps_bits, &fps, 4);
  for (uint32_t v : {fps_bits, t, h, w}) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
  }
  bytes.insert(bytes.end(), static_cast<size_t>(t) * h * w * 3, fill);
  return bytes;
}

VideoClip random_clip(int64_t t, int64_t h, int64_t w, uint64_t seed, double fps = 30.0) {
  Rng rng(seed);
  std::vector<double> values(static_cast<size_t>(t * h * w * 3));
  // f32-representable values so a file round-trip is lossless
  for (double& v : values) v = static_cast<double>(static_cast<float>(rng.uniform()));
  return make_clip(Tensor::from_data({t, h, w, 3}, std::move(values)), fps);
}

}  // namespace

TEST_CASE("clip file round-trips: clip -> file -> clip and file -> clip -> file") {
  const auto dir = temp_dir();
  const VideoClip clip = random_clip(3, 4, 6, 9);

  const auto path_a = dir / "roundtrip_a.rpgc";
  write_clip(clip, path_a);
  ClipDtype dtype;
  const VideoClip loaded = read_clip(path_a, &dtype);
  CHECK(dtype == ClipDtype::F32);
  CHECK(loaded.fps == doctest::Approx(clip.fps));
  REQUIRE(loaded.frames.same_shape(clip.frames));
  for (int64_t i = 0; i < clip.frames.numel(); ++i) CHECK(loaded.frames[i] == clip.frames[i]);

  const auto path_b = dir / "roundtrip_b.rpgc";
  write_clip(loaded, path_b, dtype);
  CHECK(read_bytes(path_a) == read_bytes(path_b));
}

TEST_CASE("u8 clip files round-trip byte-exactly") {
  const auto dir = temp_dir();
  const auto path = dir / "bytes.rpgc";
  write_bytes(path, u8_clip_bytes(25.0f, 2, 3, 3, 128));
  ClipDtype dtype;
  const VideoClip clip = read_clip(path, &dtype);
  CHECK(dtype == ClipDtype::U8);
  CHECK(clip.frames[0] == doctest::Approx(128.0 / 255.0));
  const auto path_b = dir / "bytes_b.rpgc";
  write_clip(clip, path_b, ClipDtype::U8);
  CHECK(read_bytes(path) == read_bytes(path_b));
}

TEST_CASE("all-zero clip decodes with the stored fps") {
  const auto dir = temp_dir();
  const auto path = dir / "zeros.rpgc";
  write_bytes(path, u8_clip_bytes(17.5f, 2, 4, 4, 0));
  const VideoClip clip = read_clip(path);
  CHECK(clip.frame_count() == 2);
  CHECK(clip.height() == 4);
  CHECK(clip.width() == 4);
  CHECK(clip.fps == doctest::Approx(17.5));
  for (int64_t i = 0; i < clip.frames.numel(); ++i) CHECK(clip.frames[i] == 0.0);
}

TEST_CASE("truncated payload reports the exact byte offset") {
  const auto dir = temp_dir();
  const auto path = dir / "short.rpgc";
  auto bytes = u8_clip_bytes(30.0f, 2, 4, 4, 7);  // 24 + 96 bytes
  bytes.resize(bytes.size() - 40);                // stops at byte 80
  write_bytes(path, bytes);
  try {
    read_clip(path);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("byte offset 80") != std::string::npos);
  }
}

TEST_CASE("bad magic and bad version are format errors") {
  const auto dir = temp_dir();
  auto bytes = u8_clip_bytes(30.0f, 1, 2, 2, 1);
  bytes[0] = 'X';
  write_bytes(dir / "magic.rpgc", bytes);
  CHECK_THROWS_AS(read_clip(dir / "magic.rpgc"), FormatError);

  bytes = u8_clip_bytes(30.0f, 1, 2, 2, 1);
  bytes[4] = 9;
  write_bytes(dir / "version.rpgc", bytes);
  CHECK_THROWS_AS(read_clip(dir / "version.rpgc"), FormatError);
}

TEST_CASE("degrade identity when factor 1 and no noise") {
  const VideoClip clip = random_clip(2, 4, 4, 3);
  const VideoClip out = degrade(clip, 1, 0.0, 99);
  for (int64_t i = 0; i < clip.frames.numel(); ++i) CHECK(out.frames[i] == clip.frames[i]);
}

TEST_CASE("degrade keeps a constant clip constant") {
  const VideoClip clip = make_clip(Tensor::full({2, 4, 4, 3}, 0.25), 30.0);
  const VideoClip out = degrade(clip, 2, 0.0, 1);
  CHECK(out.frames.same_shape(clip.frames));
  for (int64_t i = 0; i < out.frames.numel(); ++i) CHECK(out.frames[i] == 0.25);
  CHECK(out.fps == clip.fps);
}

TEST_CASE("degrade averages a checkerboard to one half") {
  // 2x2 blocks of 0/1 in every channel: each block mean is 0.5.
  std::vector<double> values;
  for (int64_t y = 0; y < 4; ++y) {
    for (int64_t x = 0; x < 4; ++x) {
      const double v = static_cast<double>((x + y) % 2);
      for (int c = 0; c < 3; ++c) values.push_back(v);
    }
  }
  const VideoClip clip = make_clip(Tensor::from_data({1, 4, 4, 3}, std::move(values)), 30.0);
  const VideoClip out = degrade(clip, 2, 0.0, 5);
  for (int64_t i = 0; i < out.frames.numel(); ++i) CHECK(out.frames[i] == 0.5);
}

TEST_CASE("degrade rejects non-divisible extents") {
  const VideoClip clip = make_clip(Tensor::zeros({1, 5, 4, 3}), 30.0);
  CHECK_THROWS_AS(degrade(clip, 2, 0.0, 1), ConfigError);
}

TEST_CASE("degrade is deterministic per seed") {
  const VideoClip clip = random_clip(2, 8, 8, 21);
  const VideoClip a = degrade(clip, 2, 0.05, 42);
  const VideoClip b = degrade(clip, 2, 0.05, 42);
  const VideoClip c = degrade(clip, 2, 0.05, 43);
  bool same = true;
  bool differs = false;
  for (int64_t i = 0; i < a.frames.numel(); ++i) {
    same = same && a.frames[i] == b.frames[i];
    differs = differs || a.frames[i] != c.frames[i];
  }
  CHECK(same);
  CHECK(differs);
}

TEST_CASE("noise-free degrade commutes with block-aligned crops") {
  const VideoClip clip = random_clip(2, 8, 8, 33);
  const RoiBox box{2, 4, 4, 4};
  const VideoClip a = degrade(crop_roi(clip, box), 2, 0.0, 0);
  const VideoClip b = crop_roi(degrade(clip, 2, 0.0, 0), box);
  REQUIRE(a.frames.same_shape(b.frames));
  for (int64_t i = 0; i < a.frames.numel(); ++i) {
    CHECK(a.frames[i] == doctest::Approx(b.frames[i]).epsilon(1e-15));
  }
}

TEST_CASE("crop_roi full frame is the identity") {
  const VideoClip clip = random_clip(2, 5, 7, 44);
  const VideoClip out = crop_roi(clip, RoiBox{0, 0, 5, 7});
  for (int64_t i = 0; i < clip.frames.numel(); ++i) CHECK(out.frames[i] == clip.frames[i]);
}

TEST_CASE("crop_roi 1x1 box keeps the corner pixel") {
  const VideoClip clip = random_clip(3, 4, 4, 55);
  const VideoClip out = crop_roi(clip, RoiBox{0, 0, 1, 1});
  CHECK(out.frames.shape() == Shape{3, 1, 1, 3});
  for (int64_t t = 0; t < 3; ++t) {
    for (int64_t c = 0; c < 3; ++c) {
      CHECK(out.frames[t * 3 + c] == clip.frames[t * 4 * 4 * 3 + c]);
    }
  }
}

TEST_CASE("crop of a crop equals the composed crop") {
  const VideoClip clip = random_clip(2, 8, 8, 66);
  const VideoClip nested = crop_roi(crop_roi(clip, RoiBox{1, 2, 6, 5}), RoiBox{2, 1, 3, 3});
  const VideoClip direct = crop_roi(clip, RoiBox{3, 3, 3, 3});
  REQUIRE(nested.frames.same_shape(direct.frames));
  for (int64_t i = 0; i < nested.frames.numel(); ++i) {
    CHECK(nested.frames[i] == direct.frames[i]);
  }
}

TEST_CASE("crop_roi rejects out-of-bounds boxes") {
  const VideoClip clip = random_clip(1, 4, 4, 77);
  CHECK_THROWS_AS(crop_roi(clip, RoiBox{2, 2, 3, 2}), ContractError);
}

TEST_CASE("roi sidecar parsing") {
  const auto dir = temp_dir();
  const auto path = dir / "box.roi";
  std::ofstream(path, std::ios::trunc) << "2 3 4 5\n";
  const RoiBox box = read_roi_file(path);
  CHECK(box.top == 2);
  CHECK(box.left == 3);
  CHECK(box.height == 4);
  CHECK(box.width == 5);
  std::ofstream(path, std::ios::trunc) << "nonsense\n";
  CHECK_THROWS_AS(read_roi_file(path), FormatError);
}

TEST_CASE("network layout round-trip") {
  const VideoClip clip = random_clip(2, 3, 4, 88);
  const Tensor input = clip_to_input(clip);
  CHECK(input.shape() == Shape{1, 3, 2, 3, 4});
  const VideoClip back = input_to_clip(input, clip.fps);
  for (int64_t i = 0; i < clip.frames.numel(); ++i) CHECK(back.frames[i] == clip.frames[i]);
}
