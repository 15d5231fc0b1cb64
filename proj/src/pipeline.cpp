#include "photoprior/pipeline.hpp"

#include <algorithm>
#include <cstdio>

#include "photoprior/error.hpp"
#include "photoprior/hash.hpp"

namespace fs = std::filesystem;

namespace photoprior {

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::sampling: return "sampling";
    case Phase::embedding: return "embedding";
    case Phase::prior: return "prior";
    case Phase::scoring: return "scoring";
    case Phase::done: return "done";
    case Phase::failed: return "failed";
  }
  return "unknown";
}

Pipeline::Pipeline(Config config) : Pipeline(config, load_backend(config.backend_spec())) {}

Pipeline::Pipeline(Config config, std::shared_ptr<const EmbeddingBackend> backend)
    : config_(std::move(config)),
      backend_(std::move(backend)),
      media_(std::make_unique<MediaTool>(config_.ffmpeg, config_.video_encoder)) {
  if (!backend_) throw Error(Errc::invalid_argument, "pipeline needs an embedding backend");
}

EmbeddedVideo Pipeline::embed_video(const fs::path& video, double rate, const EmbeddingCache* cache,
                                    const ProgressFn& progress) const {
  if (!fs::is_regular_file(video)) throw Error(Errc::not_found, "video not found: " + video.string());
  if (progress) progress(Phase::sampling, 0.0);
  return embed_video(video, sha256_file(video), rate, cache, progress);
}

EmbeddedVideo Pipeline::embed_video(const fs::path& video, const std::string& video_hash, double rate,
                                    const EmbeddingCache* cache, const ProgressFn& progress) const {
  if (!(rate > 0.0)) throw Error(Errc::invalid_argument, "sampling rate must be positive");
  if (cache) {
    if (auto hit = cache->lookup(video_hash, rate, backend_->fingerprint())) return {std::move(*hit), true};
  }
  if (progress) progress(Phase::sampling, 0.0);

  // Frames are encoded in batches as they stream out of the decoder so a long
  // video never sits fully decoded in memory.
  constexpr std::size_t kBatch = 16;
  std::optional<FrameEmbeddingSeries> series;
  std::vector<RgbImage> batch;
  std::vector<double> stamps;
  double duration = 0.0;
  auto flush = [&] {
    if (batch.empty()) return;
    auto embeddings = backend_->encode_image_batch(batch);
    for (std::size_t i = 0; i < embeddings.size(); ++i) series->append(stamps[i], embeddings[i]);
    if (progress && duration > 0.0) progress(Phase::embedding, std::min(1.0, stamps.back() / duration));
    batch.clear();
    stamps.clear();
  };

  SampleOptions opts;
  opts.rate = rate;
  bool started = false;
  const auto report = media_->sample_frames(video, opts, [&](SampledFrame&& frame) {
    if (!started) {
      started = true;
      if (progress) progress(Phase::embedding, 0.0);
    }
    batch.push_back(std::move(frame.image));
    stamps.push_back(frame.timestamp);
    if (!series) series.emplace(FrameEmbeddingSeries::Meta{video_hash, rate, backend_->fingerprint(), 0.0},
                                static_cast<std::size_t>(backend_->dim()));
    if (batch.size() == kBatch) flush();
  });
  duration = report.info.duration;
  flush();
  if (report.failure) {
    std::string where;
    if (report.failure->last_good_timestamp) {
      char buf[64];
      std::snprintf(buf, sizeof buf, " (last good frame at %.3f s)", *report.failure->last_good_timestamp);
      where = buf;
    }
    throw Error(Errc::decode, video.string() + ": " + report.failure->message + where);
  }
  if (!series) throw Error(Errc::decode, "no frames decoded from " + video.string());

  auto meta = series->meta();
  meta.duration = report.info.duration;
  auto frames = FrameEmbeddingSeries::from_parts(std::move(meta), series->dim(),
                                                 {series->timestamps().begin(), series->timestamps().end()},
                                                 {series->matrix().begin(), series->matrix().end()});
  if (cache) cache->store(frames);
  if (progress) progress(Phase::embedding, 1.0);
  return {std::move(frames), false};
}

PriorProfile Pipeline::prior_for_keyword(std::string_view keyword, std::vector<std::string>* warnings) const {
  if (keyword.empty()) throw Error(Errc::invalid_argument, "keyword is empty");
  const auto provider = make_provider(config_.photos);
  const PriorCache cache(config_.cache_dir / "priors");
  std::string key;
  try {
    key = prior_cache_key(keyword, *provider, *backend_);
  } catch (const Error& e) {
    throw Error(e.code(), std::string(provider->kind()) + " provider, keyword '" + std::string(keyword) +
                              "': " + e.what());
  }
  if (auto hit = cache.lookup(key)) return std::move(*hit);
  auto prior = build_prior(keyword, *provider, config_.photo_count, *backend_, warnings);
  cache.store(key, prior);
  return prior;
}

PriorProfile Pipeline::prior_for_folder(const fs::path& folder, std::vector<std::string>* warnings) const {
  const LocalFolderProvider provider(folder, LocalFolderProvider::Layout::flat);
  auto photos = fetch_photos("", provider, config_.photo_count);
  if (warnings) warnings->insert(warnings->end(), photos.warnings.begin(), photos.warnings.end());
  return build_prior_from_images(photos.images, photos.refs, "", *backend_);
}

PriorProfile Pipeline::prior_for_paths(std::span<const fs::path> paths) const {
  if (paths.empty()) throw Error(Errc::invalid_argument, "no photo paths given");
  auto photos = load_photos(paths);
  return build_prior_from_images(photos.images, photos.refs, "", *backend_);
}

ScoreSeries Pipeline::score_with_prior(const FrameEmbeddingSeries& frames, const PriorProfile& prior) const {
  return make_score_series(score_frames(prior, frames), frames, Provenance::from_prior(prior),
                           config_.smoothing_window);
}

ScoreSeries Pipeline::score_with_text(const FrameEmbeddingSeries& frames, const std::string& prompt) const {
  return make_score_series(score_frames_text(prompt, frames, *backend_), frames, Provenance::from_prompt(prompt),
                           config_.smoothing_window);
}

const ActivityLabelSet& Pipeline::labels() const {
  std::call_once(labels_once_, [&] {
    labels_ = embed_labels(load_label_file(config_.labels), *backend_, config_.prompt_template);
  });
  return *labels_;
}

std::vector<LabelScore> Pipeline::classify(const FrameEmbeddingSeries& frames, std::size_t top_k) const {
  return classify_activity(frames, labels(), top_k);
}

}  // namespace photoprior
