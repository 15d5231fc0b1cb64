#include "fixtures.hpp"

#include <algorithm>
#include <cmath>

#include "photoprior/error.hpp"
#include "photoprior/hash.hpp"
#include "photoprior/media.hpp"

namespace fs = std::filesystem;

namespace photoprior::testing {

fs::path tiny_backend_manifest() { return kSourceDir / "models" / "tiny_encoder.json"; }

TempDir::TempDir() {
  path_ = fs::temp_directory_path() / ("photoprior-test-" + random_id());
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::vector<float> basis(std::size_t dim, std::size_t axis) {
  std::vector<float> v(dim, 0.0f);
  v.at(axis) = 1.0f;
  return v;
}

std::vector<float> random_unit(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& x : v) {
      x = gauss(rng);
      norm += x * x;
    }
  } while (norm < 1e-12);
  norm = std::sqrt(norm);
  std::vector<float> out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(v[i] / norm);
  return out;
}

RgbImage solid_image(int width, int height, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  RgbImage img;
  img.width = width;
  img.height = height;
  img.pixels.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
    img.pixels[i] = r;
    img.pixels[i + 1] = g;
    img.pixels[i + 2] = b;
  }
  return img;
}

namespace {

void put(RgbImage& img, int x, int y, int r, int g, int b) {
  auto* p = &img.pixels[(static_cast<std::size_t>(y) * img.width + x) * 3];
  p[0] = static_cast<std::uint8_t>(std::clamp(r, 0, 255));
  p[1] = static_cast<std::uint8_t>(std::clamp(g, 0, 255));
  p[2] = static_cast<std::uint8_t>(std::clamp(b, 0, 255));
}

}  // namespace

RgbImage scene_x(int width, int height) {
  // Red/blue checkerboard with a yellow disc.
  RgbImage img = solid_image(width, height, 0, 0, 0);
  const double cx = width * 0.5;
  const double cy = height * 0.5;
  const double radius = std::min(width, height) * 0.3;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      if (std::hypot(x - cx, y - cy) < radius) put(img, x, y, 250, 220, 30);
      else if (((x / 16) + (y / 16)) % 2 == 0) put(img, x, y, 210, 30, 40);
      else put(img, x, y, 30, 40, 200);
    }
  return img;
}

RgbImage scene_y(int width, int height) {
  // Vertical green-to-white gradient crossed by dark horizontal stripes.
  RgbImage img = solid_image(width, height, 0, 0, 0);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const int t = 255 * y / std::max(1, height - 1);
      if ((y / 6) % 4 == 0) put(img, x, y, 20, 20, 20);
      else put(img, x, y, t, 160 + t / 3, t);
    }
  return img;
}

RgbImage near_duplicate(const RgbImage& image, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> noise(-6, 6);
  std::uniform_int_distribution<int> shift(-8, 8);
  const int s = shift(rng);
  RgbImage out = image;
  for (auto& p : out.pixels) p = static_cast<std::uint8_t>(std::clamp(p + s + noise(rng), 0, 255));
  return out;
}

StubBackend::StubBackend(int dim, ImageFn image_fn, std::map<std::string, std::vector<float>> texts,
                         std::string fingerprint)
    : dim_(dim), image_fn_(std::move(image_fn)), texts_(std::move(texts)), fingerprint_(std::move(fingerprint)) {}

EmbeddingVector StubBackend::encode_image(const RgbImage& image) const {
  if (!image.valid()) throw Error(Errc::invalid_argument, "zero-size or malformed bitmap");
  return EmbeddingVector::normalized(image_fn_(image));
}

EmbeddingVector StubBackend::encode_text(std::string_view text) const {
  if (text.empty()) throw Error(Errc::invalid_argument, "text is empty");
  if (auto it = texts_.find(std::string(text)); it != texts_.end()) return EmbeddingVector::normalized(it->second);
  std::mt19937_64 rng(std::hash<std::string_view>{}(text));
  return EmbeddingVector::normalized(random_unit(static_cast<std::size_t>(dim_), rng));
}

std::shared_ptr<StubBackend> color_keyed_stub(int dim, std::map<std::string, std::vector<float>> texts) {
  return std::make_shared<StubBackend>(
      dim, [dim](const RgbImage& img) { return basis(dim, img.pixels.at(0) % dim); }, std::move(texts));
}

FrameEmbeddingSeries make_frames(const std::vector<std::vector<float>>& vectors, double rate,
                                 const std::string& fingerprint) {
  FrameEmbeddingSeries series({"fixture-hash", rate, fingerprint, vectors.size() / rate}, vectors.at(0).size());
  for (std::size_t i = 0; i < vectors.size(); ++i)
    series.append(static_cast<double>(i) / rate, EmbeddingVector::normalized(vectors[i]));
  return series;
}

ScoreSeries make_series(const std::vector<double>& values, double rate) {
  ScoreSeries s;
  s.id = "fixture";
  s.video_hash = "fixture-hash";
  s.backend_fingerprint = "stub";
  s.sampling_rate = rate;
  s.duration = values.size() / rate;
  s.provenance = Provenance::from_prompt("fixture");
  for (std::size_t i = 0; i < values.size(); ++i) s.timestamps.push_back(static_cast<double>(i) / rate);
  s.raw = values;
  s.normalized = normalize_scores(values);
  return s;
}

void write_xy_video(const fs::path& out, int seconds, int x_begin, int x_end, int width, int height) {
  const auto x = scene_x(width, height);
  const auto y = scene_y(width, height);
  std::vector<RgbImage> frames;
  for (int i = 0; i < seconds; ++i) frames.push_back(i >= x_begin && i < x_end ? x : y);
  MediaTool(kFfmpeg).write_video(frames, 1.0, out);
}

std::vector<fs::path> write_x_photos(const fs::path& dir, int count) {
  fs::create_directories(dir);
  std::vector<fs::path> paths;
  const auto x = scene_x(200, 150);
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "x_%02d.png", i);
    paths.push_back(dir / name);
    save_image(near_duplicate(x, 1000 + i), paths.back());
  }
  return paths;
}

}  // namespace photoprior::testing
