#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "photoprior/image.hpp"

namespace photoprior {

inline constexpr double kUnitNormTolerance = 1e-5;

// A unit-length embedding produced by a joint image/text encoder. The only
// ways to construct one normalize or verify the norm, so every instance that
// exists satisfies ||v|| == 1 within kUnitNormTolerance.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;

  /// Scales `raw` to unit length. Throws on empty, non-finite or zero input.
  static EmbeddingVector normalized(std::vector<float> raw);

  /// Adopts values that are already unit length (e.g. read back from disk).
  static EmbeddingVector from_unit(std::vector<float> values);

  std::size_t dim() const { return values_.size(); }
  std::span<const float> values() const { return values_; }
  float operator[](std::size_t i) const { return values_[i]; }

  bool operator==(const EmbeddingVector&) const = default;

 private:
  explicit EmbeddingVector(std::vector<float> v) : values_(std::move(v)) {}
  std::vector<float> values_;
};

double dot(std::span<const float> a, std::span<const float> b);
double dot(std::span<const double> a, std::span<const float> b);
double l2_norm(std::span<const double> v);
double l2_norm(std::span<const float> v);
double cosine(std::span<const double> a, std::span<const float> b);

// Per-channel normalization applied after resize-shorter-side + center-crop.
struct Preprocessing {
  std::string id;
  std::array<float, 3> mean{};
  std::array<float, 3> stddev{};
};

/// Looks up a registered preprocessing pipeline ("clip_center_crop",
/// "unit_center_crop"). Throws invalid_argument for unknown ids.
const Preprocessing& preprocessing_pipeline(std::string_view id);

enum class TextOverflow { error, truncate };

struct TextTowerSpec {
  std::filesystem::path model_path;  // separate ONNX file for the text tower
  std::string input = "text_features";
  std::string output = "text_embeds";
  std::string tokenizer = "hashed_words";
  int vocab_size = 2048;
  int context_length = 77;
  TextOverflow overflow = TextOverflow::error;

  bool operator==(const TextTowerSpec&) const = default;
};

struct BackendSpec {
  std::filesystem::path model_path;
  int input_resolution = 224;
  int dim = 512;
  std::string preprocessing = "clip_center_crop";
  std::string image_input = "pixel_values";
  std::string image_output = "image_embeds";
  std::optional<TextTowerSpec> text;

  /// Relative model paths resolve against base_dir (the manifest's folder).
  static BackendSpec from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static BackendSpec load(const std::filesystem::path& manifest);
  nlohmann::json to_json() const;

  void validate() const;
  bool operator==(const BackendSpec&) const = default;
};

struct Modalities {
  bool image = false;
  bool text = false;
};

/// Lower-cased alphanumeric word tokens, the input unit of the hashed-words tokenizer.
std::vector<std::string> tokenize_words(std::string_view text);

/// Bag-of-words count vector over `vocab_size` FNV-1a buckets. Inputs longer
/// than context_length either throw or are truncated (with a notice).
std::vector<float> hashed_word_features(std::string_view text, const TextTowerSpec& spec,
                                        const std::function<void(std::string_view)>& notice = {});

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;

  virtual int dim() const = 0;
  virtual Modalities modalities() const = 0;
  /// Identifies model bytes + preprocessing; embeddings are only comparable
  /// between equal fingerprints.
  virtual std::string fingerprint() const = 0;

  virtual EmbeddingVector encode_image(const RgbImage& image) const = 0;
  virtual EmbeddingVector encode_text(std::string_view text) const = 0;

  /// Order-preserving batch encode. A failure names the offending index.
  virtual std::vector<EmbeddingVector> encode_image_batch(std::span<const RgbImage> images) const;
};

using NoticeSink = std::function<void(std::string_view)>;

/// Loads an ONNX model described by `spec` and verifies its output width
/// against spec.dim with a probe inference.
std::unique_ptr<EmbeddingBackend> load_backend(const BackendSpec& spec, NoticeSink notices = {});

}  // namespace photoprior
