#include "photoprior/store.hpp"

#include <bit>
#include <cstdio>
#include <cstring>

#include "photoprior/error.hpp"
#include "photoprior/files.hpp"
#include "photoprior/hash.hpp"

namespace fs = std::filesystem;

namespace photoprior {
namespace {

nlohmann::json parse_json_file(const fs::path& path) {
  const auto text = read_text_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_argument, path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const nlohmann::json& j) { write_file_atomic(path, j.dump(1) + "\n"); }

nlohmann::json interval_json(const Interval& iv) { return {{"start", iv.start}, {"end", iv.end}}; }

std::string rate_key(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", rate);
  return buf;
}

}  // namespace

nlohmann::json ProjectManifest::to_json() const {
  nlohmann::json ex = nlohmann::json::array();
  for (const auto& e : exports) {
    nlohmann::json ivs = nlohmann::json::array();
    for (const auto& iv : e.intervals) ivs.push_back(interval_json(iv));
    ex.push_back({{"intervals", ivs}, {"path", e.path}});
  }
  return {{"schema_version", schema_version},
          {"project_id", project_id},
          {"video_path", video_path},
          {"video_hash", video_hash},
          {"sampling_rate", sampling_rate},
          {"backend_fingerprint", backend_fingerprint},
          {"backend", backend},
          {"activity_label", activity_label ? nlohmann::json(*activity_label) : nlohmann::json(nullptr)},
          {"prior_ids", prior_ids},
          {"score_series_ids", score_series_ids},
          {"exports", ex}};
}

ProjectManifest ProjectManifest::from_json(const nlohmann::json& j) {
  ProjectManifest m;
  try {
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version > kManifestSchemaVersion)
      throw Error(Errc::unsupported_version, "project schema " + std::to_string(m.schema_version) +
                                                 " is newer than supported " +
                                                 std::to_string(kManifestSchemaVersion));
    m.project_id = j.at("project_id").get<std::string>();
    m.video_path = j.at("video_path").get<std::string>();
    m.video_hash = j.at("video_hash").get<std::string>();
    m.sampling_rate = j.at("sampling_rate").get<double>();
    m.backend_fingerprint = j.at("backend_fingerprint").get<std::string>();
    m.backend = j.value("backend", nlohmann::json(nullptr));
    if (j.contains("activity_label") && !j["activity_label"].is_null())
      m.activity_label = j["activity_label"].get<std::string>();
    m.prior_ids = j.at("prior_ids").get<std::vector<std::string>>();
    m.score_series_ids = j.at("score_series_ids").get<std::vector<std::string>>();
    for (const auto& e : j.at("exports")) {
      ExportRecord rec;
      rec.path = e.at("path").get<std::string>();
      for (const auto& iv : e.at("intervals"))
        rec.intervals.push_back({iv.at("start").get<double>(), iv.at("end").get<double>()});
      m.exports.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_argument, std::string("malformed project manifest: ") + e.what());
  }
  return m;
}

void ProjectDir::create() const {
  for (const auto& d : {root_, embeddings(), priors(), scores(), exports(), thumbs()}) fs::create_directories(d);
}

fs::path save_project(const ProjectDir& dir, const ProjectManifest& manifest) {
  dir.create();
  write_json_file(dir.manifest(), manifest.to_json());
  return dir.manifest();
}

LoadedProject load_project(const ProjectDir& dir) {
  if (!fs::is_regular_file(dir.manifest()))
    throw Error(Errc::not_found, "no project manifest at " + dir.manifest().string());
  LoadedProject out;
  out.manifest = ProjectManifest::from_json(parse_json_file(dir.manifest()));

  std::vector<std::string> dangling;
  for (const auto& id : out.manifest.prior_ids)
    if (!fs::is_regular_file(dir.prior_file(id))) dangling.push_back("prior " + id);
  for (const auto& id : out.manifest.score_series_ids)
    if (!fs::is_regular_file(dir.score_file(id))) dangling.push_back("score series " + id);
  if (!dangling.empty()) {
    std::string msg = "project references missing artifacts:";
    for (const auto& d : dangling) msg += " " + d + ";";
    throw Error(Errc::dangling_reference, msg);
  }

  const fs::path video = out.manifest.video_path;
  if (!fs::is_regular_file(video))
    out.warnings.push_back("source video is missing: " + video.string());
  else if (sha256_file(video) != out.manifest.video_hash)
    out.warnings.push_back("source video changed since the project was created; cached results are stale");
  return out;
}

void save_prior(const ProjectDir& dir, const PriorProfile& prior) {
  write_json_file(dir.prior_file(prior.id), prior.to_json());
}

PriorProfile load_prior(const ProjectDir& dir, const std::string& id) {
  const auto path = dir.prior_file(id);
  if (!fs::is_regular_file(path)) throw Error(Errc::not_found, "unknown prior " + id);
  return PriorProfile::from_json(parse_json_file(path));
}

void write_score_file(const fs::path& path, const ScoreSeries& series) {
  series.validate();
  write_json_file(path, series.to_json());
}

ScoreSeries read_score_file(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw Error(Errc::not_found, "score file not found: " + path.string());
  return ScoreSeries::from_json(parse_json_file(path));
}

void save_score_series(const ProjectDir& dir, const ScoreSeries& series) {
  write_score_file(dir.score_file(series.id), series);
}

ScoreSeries load_score_series(const ProjectDir& dir, const std::string& id) {
  const auto path = dir.score_file(id);
  if (!fs::is_regular_file(path)) throw Error(Errc::not_found, "unknown score series " + id);
  return read_score_file(path);
}

// ---------------------------------------------------------------------------

std::string EmbeddingCache::key(const std::string& video_hash, double rate, const std::string& backend_fingerprint) {
  return sha256_hex(video_hash + "|" + rate_key(rate) + "|" + backend_fingerprint).substr(0, 24);
}

void EmbeddingCache::store(const FrameEmbeddingSeries& series) const {
  const auto& meta = series.meta();
  const auto k = key(meta.video_hash, meta.sampling_rate, meta.backend_fingerprint);

  std::vector<std::uint8_t> blob(series.matrix().size() * sizeof(float));
  std::memcpy(blob.data(), series.matrix().data(), blob.size());
  if constexpr (std::endian::native == std::endian::big) {
    for (size_t i = 0; i < blob.size(); i += 4) {
      std::swap(blob[i], blob[i + 3]);
      std::swap(blob[i + 1], blob[i + 2]);
    }
  }
  write_file_atomic(dir_ / (k + ".f32"), blob);
  const nlohmann::json header{{"schema_version", kEmbeddingSchemaVersion},
                              {"video_hash", meta.video_hash},
                              {"sampling_rate", meta.sampling_rate},
                              {"backend_fingerprint", meta.backend_fingerprint},
                              {"duration", meta.duration},
                              {"dim", series.dim()},
                              {"count", series.size()},
                              {"timestamps", std::vector<double>(series.timestamps().begin(), series.timestamps().end())},
                              {"blob", k + ".f32"},
                              {"blob_sha256", sha256_hex(blob)}};
  // Header last: a reader that finds the header also finds a complete blob.
  write_json_file(dir_ / (k + ".json"), header);
}

std::optional<FrameEmbeddingSeries> EmbeddingCache::lookup(const std::string& video_hash, double rate,
                                                           const std::string& backend_fingerprint) const {
  const auto k = key(video_hash, rate, backend_fingerprint);
  const auto header_path = dir_ / (k + ".json");
  if (!fs::is_regular_file(header_path)) return std::nullopt;
  const auto h = parse_json_file(header_path);
  if (h.value("schema_version", 0) > kEmbeddingSchemaVersion) return std::nullopt;
  if (h.at("video_hash") != video_hash || h.at("backend_fingerprint") != backend_fingerprint ||
      rate_key(h.at("sampling_rate").get<double>()) != rate_key(rate))
    return std::nullopt;

  const auto blob_path = dir_ / h.at("blob").get<std::string>();
  if (!fs::is_regular_file(blob_path)) return std::nullopt;
  auto blob = read_file(blob_path);
  if (sha256_hex(blob) != h.at("blob_sha256").get<std::string>())
    throw Error(Errc::io, "embedding cache blob is corrupt: " + blob_path.string());
  if constexpr (std::endian::native == std::endian::big) {
    for (size_t i = 0; i + 3 < blob.size(); i += 4) {
      std::swap(blob[i], blob[i + 3]);
      std::swap(blob[i + 1], blob[i + 2]);
    }
  }
  std::vector<float> matrix(blob.size() / sizeof(float));
  std::memcpy(matrix.data(), blob.data(), matrix.size() * sizeof(float));

  FrameEmbeddingSeries::Meta meta{video_hash, h.at("sampling_rate").get<double>(), backend_fingerprint,
                                  h.value("duration", 0.0)};
  return FrameEmbeddingSeries::from_parts(std::move(meta), h.at("dim").get<std::size_t>(),
                                          h.at("timestamps").get<std::vector<double>>(), std::move(matrix));
}

void PriorCache::store(const std::string& key, const PriorProfile& prior) const {
  write_json_file(dir_ / (key + ".json"), prior.to_json());
}

std::optional<PriorProfile> PriorCache::lookup(const std::string& key) const {
  const auto path = dir_ / (key + ".json");
  if (!fs::is_regular_file(path)) return std::nullopt;
  return PriorProfile::from_json(parse_json_file(path));
}

}  // namespace photoprior
