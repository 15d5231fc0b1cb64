#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "photoprior/media.hpp"
#include "photoprior/prior.hpp"
#include "photoprior/score.hpp"

namespace photoprior {

inline constexpr int kManifestSchemaVersion = 1;
inline constexpr int kEmbeddingSchemaVersion = 1;

struct ExportRecord {
  std::vector<Interval> intervals;
  std::string path;

  bool operator==(const ExportRecord&) const = default;
};

struct ProjectManifest {
  int schema_version = kManifestSchemaVersion;
  std::string project_id;
  std::string video_path;
  std::string video_hash;
  double sampling_rate = 1.0;
  std::string backend_fingerprint;
  nlohmann::json backend;  // declared BackendSpec, including preprocessing
  std::optional<std::string> activity_label;  // set when the classifier chose the keyword
  std::vector<std::string> prior_ids;
  std::vector<std::string> score_series_ids;
  std::vector<ExportRecord> exports;

  nlohmann::json to_json() const;
  static ProjectManifest from_json(const nlohmann::json& j);
  bool operator==(const ProjectManifest&) const = default;
};

// Directory layout of one project:
//   manifest.json  embeddings/  priors/  scores/  exports/  thumbs/
class ProjectDir {
 public:
  explicit ProjectDir(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path manifest() const { return root_ / "manifest.json"; }
  std::filesystem::path embeddings() const { return root_ / "embeddings"; }
  std::filesystem::path priors() const { return root_ / "priors"; }
  std::filesystem::path scores() const { return root_ / "scores"; }
  std::filesystem::path exports() const { return root_ / "exports"; }
  std::filesystem::path thumbs() const { return root_ / "thumbs"; }
  std::filesystem::path prior_file(const std::string& id) const { return priors() / (id + ".json"); }
  std::filesystem::path score_file(const std::string& id) const { return scores() / (id + ".json"); }

  void create() const;

 private:
  std::filesystem::path root_;
};

struct LoadedProject {
  ProjectManifest manifest;
  std::vector<std::string> warnings;
};

/// Writes manifest.json atomically and returns its path.
std::filesystem::path save_project(const ProjectDir& dir, const ProjectManifest& manifest);

/// Reads and checks a manifest: newer schemas are rejected, every prior and
/// score id must exist on disk, and a changed video yields a stale warning.
LoadedProject load_project(const ProjectDir& dir);

void save_prior(const ProjectDir& dir, const PriorProfile& prior);
PriorProfile load_prior(const ProjectDir& dir, const std::string& id);
void save_score_series(const ProjectDir& dir, const ScoreSeries& series);
ScoreSeries load_score_series(const ProjectDir& dir, const std::string& id);

void write_score_file(const std::filesystem::path& path, const ScoreSeries& series);
ScoreSeries read_score_file(const std::filesystem::path& path);

// Frame embeddings keyed by (video hash, sampling rate, backend fingerprint).
// Each entry is a JSON header plus a little-endian float32 blob.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  static std::string key(const std::string& video_hash, double rate, const std::string& backend_fingerprint);

  void store(const FrameEmbeddingSeries& series) const;
  std::optional<FrameEmbeddingSeries> lookup(const std::string& video_hash, double rate,
                                             const std::string& backend_fingerprint) const;

 private:
  std::filesystem::path dir_;
};

// Priors keyed by prior_cache_key(); values are prior files.
class PriorCache {
 public:
  explicit PriorCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void store(const std::string& key, const PriorProfile& prior) const;
  std::optional<PriorProfile> lookup(const std::string& key) const;

 private:
  std::filesystem::path dir_;
};

}  // namespace photoprior
