#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "photoprior/embedding.hpp"
#include "photoprior/image.hpp"
#include "photoprior/score.hpp"

namespace photoprior::testing {

inline const std::filesystem::path kSourceDir = PHOTOPRIOR_SOURCE_DIR;
inline const std::filesystem::path kFfmpeg = PHOTOPRIOR_TEST_FFMPEG;

std::filesystem::path tiny_backend_manifest();

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::vector<float> basis(std::size_t dim, std::size_t axis);
std::vector<float> random_unit(std::size_t dim, std::mt19937_64& rng);

RgbImage solid_image(int width, int height, std::uint8_t r, std::uint8_t g, std::uint8_t b);

// Two visually distinct procedural scenes used for the synthetic video.
RgbImage scene_x(int width, int height);
RgbImage scene_y(int width, int height);
// Small per-pixel noise and a brightness shift; stays visually the same scene.
RgbImage near_duplicate(const RgbImage& image, std::uint64_t seed);

// Backend emitting fixed vectors. Images map through `image_fn`; text looks
// up `texts` (unknown prompts hash to a pseudo-random unit vector).
class StubBackend final : public EmbeddingBackend {
 public:
  using ImageFn = std::function<std::vector<float>(const RgbImage&)>;

  StubBackend(int dim, ImageFn image_fn, std::map<std::string, std::vector<float>> texts = {},
              std::string fingerprint = "stub");

  int dim() const override { return dim_; }
  Modalities modalities() const override { return {true, true}; }
  std::string fingerprint() const override { return fingerprint_; }
  EmbeddingVector encode_image(const RgbImage& image) const override;
  EmbeddingVector encode_text(std::string_view text) const override;

 private:
  int dim_;
  ImageFn image_fn_;
  std::map<std::string, std::vector<float>> texts_;
  std::string fingerprint_;
};

// Stub keyed by the first pixel's red channel: solid_image(.., r, ..) maps to basis(dim, r % dim).
std::shared_ptr<StubBackend> color_keyed_stub(int dim, std::map<std::string, std::vector<float>> texts = {});

FrameEmbeddingSeries make_frames(const std::vector<std::vector<float>>& vectors, double rate,
                                 const std::string& fingerprint = "stub");

// Score series over values at 1/rate spacing, normalized by normalize_scores.
ScoreSeries make_series(const std::vector<double>& values, double rate = 1.0);

// 60 s at 1 fps: frames 20..29 are scene X, the rest scene Y.
void write_xy_video(const std::filesystem::path& out, int seconds = 60, int x_begin = 20, int x_end = 30,
                    int width = 160, int height = 120);

// Ten near-duplicates of scene X as PNG files; returns their paths.
std::vector<std::filesystem::path> write_x_photos(const std::filesystem::path& dir, int count = 10);

}  // namespace photoprior::testing
