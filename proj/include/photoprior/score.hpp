#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "photoprior/embedding.hpp"

namespace photoprior {

struct PriorProfile;

// Timestamped unit embeddings of sampled frames, stored as one row-major
// float matrix (frame x dim). Frame indices are implicit: row i is frame i.
class FrameEmbeddingSeries {
 public:
  struct Meta {
    std::string video_hash;
    double sampling_rate = 1.0;
    std::string backend_fingerprint;
    double duration = 0.0;  // source duration in seconds, 0 when unknown

    bool operator==(const Meta&) const = default;
  };

  FrameEmbeddingSeries() = default;
  FrameEmbeddingSeries(Meta meta, std::size_t dim);

  /// Rebuilds a series from stored parts, checking every invariant.
  static FrameEmbeddingSeries from_parts(Meta meta, std::size_t dim, std::vector<double> timestamps,
                                         std::vector<float> matrix);

  /// Appends the next frame. Timestamps must strictly increase.
  void append(double timestamp, const EmbeddingVector& embedding);

  const Meta& meta() const { return meta_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return timestamps_.size(); }
  bool empty() const { return timestamps_.empty(); }

  std::span<const double> timestamps() const { return timestamps_; }
  std::span<const float> matrix() const { return matrix_; }
  std::span<const float> embedding(std::size_t i) const {
    return std::span<const float>(matrix_).subspan(i * dim_, dim_);
  }

  bool operator==(const FrameEmbeddingSeries&) const = default;

 private:
  Meta meta_;
  std::size_t dim_ = 0;
  std::vector<double> timestamps_;
  std::vector<float> matrix_;
};

struct Provenance {
  enum class Kind { prior, text_prompt };
  Kind kind = Kind::prior;
  std::string prior_id;  // kind == prior
  std::string keyword;   // kind == prior, may be empty for personal photo sets
  std::string prompt;    // kind == text_prompt

  static Provenance from_prior(const PriorProfile& prior);
  static Provenance from_prompt(std::string prompt);
  nlohmann::json to_json() const;
  static Provenance from_json(const nlohmann::json& j);
  bool operator==(const Provenance&) const = default;
};

inline constexpr int kScoreSchemaVersion = 1;

// Per-frame highlight scores. `raw` holds the values that were normalized:
// dot products, or their moving average when smoothing_window is set.
struct ScoreSeries {
  std::string id;
  std::string video_hash;
  std::string backend_fingerprint;
  double sampling_rate = 1.0;
  double duration = 0.0;
  Provenance provenance;
  std::optional<int> smoothing_window;
  std::vector<double> timestamps;
  std::vector<double> raw;
  std::vector<double> normalized;

  std::size_t size() const { return timestamps.size(); }
  /// End of the video: duration when known, else one sample period past the last frame.
  double end_time() const;

  /// Throws invalid_argument when an invariant does not hold.
  void validate() const;

  nlohmann::json to_json() const;
  static ScoreSeries from_json(const nlohmann::json& j);
  bool operator==(const ScoreSeries&) const = default;
};

/// Highlight scores against a photo prior: raw[i] = <mean_embedding, frame_i>.
std::vector<double> score_frames(const PriorProfile& prior, const FrameEmbeddingSeries& frames);

/// Baseline scores against a text prompt embedding.
std::vector<double> score_frames_text(std::string_view prompt, const FrameEmbeddingSeries& frames,
                                      const EmbeddingBackend& backend);

/// Dot product of one reference vector with every frame row.
std::vector<double> score_against(std::span<const double> reference, const FrameEmbeddingSeries& frames);

/// Min-max to [0,1]; a constant series maps to 0.5 everywhere.
std::vector<double> normalize_scores(std::span<const double> raw);

/// Centered moving average over an odd window, truncated at the edges.
std::vector<double> smooth_scores(std::span<const double> scores, int window);

/// Packages raw scores with the frame metadata, optionally smoothing before
/// normalization, under a fresh id.
ScoreSeries make_score_series(std::vector<double> raw, const FrameEmbeddingSeries& frames, Provenance provenance,
                              std::optional<int> smoothing_window = std::nullopt);

}  // namespace photoprior
