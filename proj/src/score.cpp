#include "photoprior/score.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "photoprior/error.hpp"
#include "photoprior/hash.hpp"
#include "photoprior/prior.hpp"

namespace photoprior {

FrameEmbeddingSeries::FrameEmbeddingSeries(Meta meta, std::size_t dim) : meta_(std::move(meta)), dim_(dim) {
  if (dim == 0) throw Error(Errc::invalid_argument, "frame embedding dim must be positive");
  if (!(meta_.sampling_rate > 0.0)) throw Error(Errc::invalid_argument, "sampling rate must be positive");
}

FrameEmbeddingSeries FrameEmbeddingSeries::from_parts(Meta meta, std::size_t dim, std::vector<double> timestamps,
                                                      std::vector<float> matrix) {
  FrameEmbeddingSeries s(std::move(meta), dim);
  if (matrix.size() != timestamps.size() * dim)
    throw Error(Errc::invalid_argument, "embedding matrix size does not match frame count");
  for (size_t i = 1; i < timestamps.size(); ++i)
    if (!(timestamps[i] > timestamps[i - 1]))
      throw Error(Errc::invalid_argument, "frame timestamps must strictly increase");
  for (size_t i = 0; i < timestamps.size(); ++i) {
    const double n = l2_norm(std::span<const float>(matrix).subspan(i * dim, dim));
    if (!(std::abs(n - 1.0) <= kUnitNormTolerance))
      throw Error(Errc::invalid_argument, "frame " + std::to_string(i) + " embedding is not unit length");
  }
  s.timestamps_ = std::move(timestamps);
  s.matrix_ = std::move(matrix);
  return s;
}

void FrameEmbeddingSeries::append(double timestamp, const EmbeddingVector& embedding) {
  if (embedding.dim() != dim_)
    throw Error(Errc::dimension_mismatch, "frame embedding has " + std::to_string(embedding.dim()) +
                                              " dimensions, series expects " + std::to_string(dim_));
  if (!std::isfinite(timestamp) || (!timestamps_.empty() && !(timestamp > timestamps_.back())))
    throw Error(Errc::invalid_argument, "frame timestamps must strictly increase");
  timestamps_.push_back(timestamp);
  matrix_.insert(matrix_.end(), embedding.values().begin(), embedding.values().end());
}

// ---------------------------------------------------------------------------

Provenance Provenance::from_prior(const PriorProfile& prior) {
  Provenance p;
  p.kind = Kind::prior;
  p.prior_id = prior.id;
  p.keyword = prior.keyword;
  return p;
}

Provenance Provenance::from_prompt(std::string prompt) {
  Provenance p;
  p.kind = Kind::text_prompt;
  p.prompt = std::move(prompt);
  return p;
}

nlohmann::json Provenance::to_json() const {
  if (kind == Kind::text_prompt) return {{"kind", "text_prompt"}, {"prompt", prompt}};
  return {{"kind", "prior"}, {"prior_id", prior_id}, {"keyword", keyword}};
}

Provenance Provenance::from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "text_prompt") return from_prompt(j.at("prompt").get<std::string>());
  if (kind != "prior") throw Error(Errc::invalid_argument, "unknown provenance kind '" + kind + "'");
  Provenance p;
  p.prior_id = j.at("prior_id").get<std::string>();
  p.keyword = j.value("keyword", "");
  return p;
}

double ScoreSeries::end_time() const {
  if (duration > 0.0) return duration;
  return timestamps.empty() ? 0.0 : timestamps.back() + 1.0 / sampling_rate;
}

void ScoreSeries::validate() const {
  if (timestamps.empty()) throw Error(Errc::invalid_argument, "score series is empty");
  if (raw.size() != timestamps.size() || normalized.size() != timestamps.size())
    throw Error(Errc::invalid_argument, "score series arrays differ in length");
  if (!(sampling_rate > 0.0)) throw Error(Errc::invalid_argument, "score series sampling rate must be positive");
  for (size_t i = 0; i < timestamps.size(); ++i) {
    if (i > 0 && !(timestamps[i] > timestamps[i - 1]))
      throw Error(Errc::invalid_argument, "score timestamps must strictly increase");
    if (!(normalized[i] >= 0.0 && normalized[i] <= 1.0))
      throw Error(Errc::invalid_argument, "normalized score outside [0,1]");
    if (!std::isfinite(raw[i])) throw Error(Errc::invalid_argument, "raw score is not finite");
  }
}

nlohmann::json ScoreSeries::to_json() const {
  nlohmann::json j{{"schema_version", kScoreSchemaVersion},
                   {"series_id", id},
                   {"video_hash", video_hash},
                   {"backend_fingerprint", backend_fingerprint},
                   {"sampling_rate", sampling_rate},
                   {"duration", duration},
                   {"provenance", provenance.to_json()},
                   {"timestamps", timestamps},
                   {"raw", raw},
                   {"normalized", normalized}};
  j["smoothing"] = smoothing_window ? nlohmann::json{{"window", *smoothing_window}} : nlohmann::json(nullptr);
  return j;
}

ScoreSeries ScoreSeries::from_json(const nlohmann::json& j) {
  ScoreSeries s;
  try {
    const int version = j.at("schema_version").get<int>();
    if (version > kScoreSchemaVersion)
      throw Error(Errc::unsupported_version, "score file schema " + std::to_string(version) + " is newer than " +
                                                 std::to_string(kScoreSchemaVersion));
    s.id = j.at("series_id").get<std::string>();
    s.video_hash = j.at("video_hash").get<std::string>();
    s.backend_fingerprint = j.value("backend_fingerprint", "");
    s.sampling_rate = j.at("sampling_rate").get<double>();
    s.duration = j.value("duration", 0.0);
    s.provenance = Provenance::from_json(j.at("provenance"));
    if (j.contains("smoothing") && !j["smoothing"].is_null()) s.smoothing_window = j["smoothing"].at("window").get<int>();
    s.timestamps = j.at("timestamps").get<std::vector<double>>();
    s.raw = j.at("raw").get<std::vector<double>>();
    s.normalized = j.at("normalized").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_argument, std::string("malformed score file: ") + e.what());
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------

std::vector<double> score_against(std::span<const double> reference, const FrameEmbeddingSeries& frames) {
  if (reference.size() != frames.dim())
    throw Error(Errc::dimension_mismatch, "reference has " + std::to_string(reference.size()) +
                                              " dimensions, frames have " + std::to_string(frames.dim()));
  std::vector<double> out(frames.size());
  if (frames.empty()) return out;
  using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMajor> m(frames.matrix().data(), static_cast<Eigen::Index>(frames.size()),
                               static_cast<Eigen::Index>(frames.dim()));
  Eigen::Map<const Eigen::VectorXd> ref(reference.data(), static_cast<Eigen::Index>(reference.size()));
  Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size())) = m.cast<double>() * ref;
  return out;
}

std::vector<double> score_frames(const PriorProfile& prior, const FrameEmbeddingSeries& frames) {
  if (prior.backend_fingerprint != frames.meta().backend_fingerprint)
    throw Error(Errc::fingerprint_mismatch, "prior built with backend " + prior.backend_fingerprint +
                                                " but frames embedded with " + frames.meta().backend_fingerprint);
  return score_against(prior.mean_embedding, frames);
}

std::vector<double> score_frames_text(std::string_view prompt, const FrameEmbeddingSeries& frames,
                                      const EmbeddingBackend& backend) {
  if (backend.fingerprint() != frames.meta().backend_fingerprint)
    throw Error(Errc::fingerprint_mismatch, "frames were embedded with a different backend");
  const auto text = backend.encode_text(prompt);
  std::vector<double> ref(text.values().begin(), text.values().end());
  return score_against(ref, frames);
}

std::vector<double> normalize_scores(std::span<const double> raw) {
  if (raw.empty()) throw Error(Errc::invalid_argument, "cannot normalize an empty score list");
  for (double x : raw)
    if (!std::isfinite(x)) throw Error(Errc::invalid_argument, "scores must be finite");
  const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  std::vector<double> out(raw.size(), 0.5);
  if (hi == lo) return out;
  const double range = hi - lo;
  for (size_t i = 0; i < raw.size(); ++i) out[i] = std::clamp((raw[i] - lo) / range, 0.0, 1.0);
  return out;
}

std::vector<double> smooth_scores(std::span<const double> scores, int window) {
  if (window < 1 || window % 2 == 0) throw Error(Errc::invalid_argument, "smoothing window must be odd and >= 1");
  if (static_cast<size_t>(window) > scores.size())
    throw Error(Errc::invalid_argument, "smoothing window exceeds series length");
  const auto n = static_cast<std::ptrdiff_t>(scores.size());
  const std::ptrdiff_t half = window / 2;
  std::vector<double> out(scores.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto lo = std::max<std::ptrdiff_t>(0, i - half);
    const auto hi = std::min<std::ptrdiff_t>(n - 1, i + half);
    double sum = 0.0;
    for (auto k = lo; k <= hi; ++k) sum += scores[static_cast<size_t>(k)];
    out[static_cast<size_t>(i)] = sum / static_cast<double>(hi - lo + 1);
  }
  return out;
}

ScoreSeries make_score_series(std::vector<double> raw, const FrameEmbeddingSeries& frames, Provenance provenance,
                              std::optional<int> smoothing_window) {
  if (raw.size() != frames.size()) throw Error(Errc::invalid_argument, "one score per frame required");
  ScoreSeries s;
  s.id = random_id();
  s.video_hash = frames.meta().video_hash;
  s.backend_fingerprint = frames.meta().backend_fingerprint;
  s.sampling_rate = frames.meta().sampling_rate;
  s.duration = frames.meta().duration;
  s.provenance = std::move(provenance);
  s.timestamps.assign(frames.timestamps().begin(), frames.timestamps().end());
  if (smoothing_window && *smoothing_window > 1) {
    s.smoothing_window = smoothing_window;
    raw = smooth_scores(raw, *smoothing_window);
  }
  s.normalized = normalize_scores(raw);
  s.raw = std::move(raw);
  return s;
}

}  // namespace photoprior
