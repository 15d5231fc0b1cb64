#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "photoprior/embedding.hpp"
#include "photoprior/prior.hpp"

namespace photoprior {

using EnvLookup = std::function<std::optional<std::string>(const char*)>;

/// Reads the real process environment.
std::optional<std::string> process_env(const char* name);

// Runtime configuration shared by the CLI and the service. Sources, later
// ones winning: built-in defaults, JSON config file, environment variables
// (PHOTOPRIOR_FFMPEG, PHOTOPRIOR_BACKEND, PHOTOPRIOR_MODEL, PHOTOPRIOR_LABELS,
// PHOTOPRIOR_PORT, PHOTOPRIOR_PROJECTS, PHOTOPRIOR_CACHE, PHOTOPRIOR_PHOTOS),
// then command-line flags applied by the caller.
struct Config {
  std::filesystem::path ffmpeg = "ffmpeg";
  std::string video_encoder = "libx264";

  std::filesystem::path backend_manifest;
  std::optional<std::filesystem::path> model_override;

  std::filesystem::path labels;
  std::string prompt_template = "{label}";
  ProviderConfig photos;
  int photo_count = kDefaultPhotoCount;

  double sampling_rate = 1.0;
  std::optional<int> smoothing_window;
  int thumb_max_edge = 320;

  std::string host = "127.0.0.1";
  int port = 8470;
  std::filesystem::path project_root = "photoprior-projects";
  std::filesystem::path cache_dir;
  std::filesystem::path ui_dir;

  /// Defaults, then `file` (if given, or PHOTOPRIOR_CONFIG), then env.
  static Config load(const std::optional<std::filesystem::path>& file = std::nullopt,
                     const EnvLookup& env = process_env);

  void apply_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  void apply_env(const EnvLookup& env);

  /// Backend manifest with the model override applied.
  BackendSpec backend_spec() const;
};

}  // namespace photoprior
