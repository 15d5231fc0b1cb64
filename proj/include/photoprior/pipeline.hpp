#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "photoprior/classify.hpp"
#include "photoprior/config.hpp"
#include "photoprior/embedding.hpp"
#include "photoprior/media.hpp"
#include "photoprior/prior.hpp"
#include "photoprior/score.hpp"
#include "photoprior/store.hpp"

namespace photoprior {

enum class Phase { sampling, embedding, prior, scoring, done, failed };

std::string_view to_string(Phase phase);

using ProgressFn = std::function<void(Phase, double)>;

struct EmbeddedVideo {
  FrameEmbeddingSeries frames;
  bool cache_hit = false;
};

// Composes media sampling, embedding, priors, classification and scoring for
// the CLI and the service. Holds the loaded backend and media tool; all
// methods are safe to call concurrently.
class Pipeline {
 public:
  explicit Pipeline(Config config);
  Pipeline(Config config, std::shared_ptr<const EmbeddingBackend> backend);

  const Config& config() const { return config_; }
  const MediaTool& media() const { return *media_; }
  const EmbeddingBackend& backend() const { return *backend_; }

  /// Samples and embeds a video, consulting `cache` (when given) first.
  EmbeddedVideo embed_video(const std::filesystem::path& video, double rate, const EmbeddingCache* cache,
                            const ProgressFn& progress = {}) const;
  /// Same, with the video hash already known.
  EmbeddedVideo embed_video(const std::filesystem::path& video, const std::string& video_hash, double rate,
                            const EmbeddingCache* cache, const ProgressFn& progress = {}) const;

  /// Prior from the configured provider, cached under cache_dir/priors.
  PriorProfile prior_for_keyword(std::string_view keyword, std::vector<std::string>* warnings = nullptr) const;
  /// Prior from a personal photo folder (all images, filename order, up to photo_count).
  PriorProfile prior_for_folder(const std::filesystem::path& folder,
                                std::vector<std::string>* warnings = nullptr) const;
  /// Prior from an explicit list of photo files.
  PriorProfile prior_for_paths(std::span<const std::filesystem::path> paths) const;

  ScoreSeries score_with_prior(const FrameEmbeddingSeries& frames, const PriorProfile& prior) const;
  ScoreSeries score_with_text(const FrameEmbeddingSeries& frames, const std::string& prompt) const;

  /// Label database embedded lazily on first use.
  const ActivityLabelSet& labels() const;
  std::vector<LabelScore> classify(const FrameEmbeddingSeries& frames, std::size_t top_k) const;

 private:
  Config config_;
  std::shared_ptr<const EmbeddingBackend> backend_;
  std::unique_ptr<MediaTool> media_;
  mutable std::once_flag labels_once_;
  mutable std::optional<ActivityLabelSet> labels_;
};

}  // namespace photoprior
