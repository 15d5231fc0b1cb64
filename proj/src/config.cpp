#include "photoprior/config.hpp"

#include <cstdlib>
#include <fstream>

#include "photoprior/error.hpp"

namespace fs = std::filesystem;

namespace photoprior {
namespace {

fs::path resolve(const fs::path& p, const fs::path& base) {
  return (p.is_relative() && !base.empty()) ? base / p : p;
}

fs::path default_cache_dir(const EnvLookup& env) {
  if (auto xdg = env("XDG_CACHE_HOME"); xdg && !xdg->empty()) return fs::path(*xdg) / "photoprior";
  if (auto home = env("HOME"); home && !home->empty()) return fs::path(*home) / ".cache" / "photoprior";
  return fs::temp_directory_path() / "photoprior-cache";
}

}  // namespace

std::optional<std::string> process_env(const char* name) {
  if (const char* v = std::getenv(name)) return std::string(v);
  return std::nullopt;
}

Config Config::load(const std::optional<fs::path>& file, const EnvLookup& env) {
  Config c;
  const fs::path data = PHOTOPRIOR_DATA_DIR;
  c.ffmpeg = PHOTOPRIOR_DEFAULT_FFMPEG;
  c.backend_manifest = data / "models" / "tiny_encoder.json";
  c.labels = data / "data" / "activity_labels.txt";
  c.ui_dir = data / "webui" / "dist";
  c.cache_dir = default_cache_dir(env);
  c.photos.kind = "local_folder";
  c.photos.root = "photos";
  c.photos.layout = LocalFolderProvider::Layout::per_keyword;

  std::optional<fs::path> path = file;
  if (!path) {
    if (auto p = env("PHOTOPRIOR_CONFIG"); p && !p->empty()) path = fs::path(*p);
  }
  if (path) {
    std::ifstream in(*path);
    if (!in) throw Error(Errc::not_found, "config file not found: " + path->string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::invalid_argument, path->string() + ": " + e.what());
    }
    c.apply_json(j, path->parent_path());
  }
  c.apply_env(env);
  if (c.port < 0 || c.port > 65535) throw Error(Errc::invalid_argument, "port must be in 0..65535");
  if (!(c.sampling_rate > 0.0)) throw Error(Errc::invalid_argument, "sampling_rate must be positive");
  if (c.photo_count < 1) throw Error(Errc::invalid_argument, "photo_count must be at least 1");
  return c;
}

void Config::apply_json(const nlohmann::json& j, const fs::path& base) {
  try {
    if (j.contains("ffmpeg")) {
      // Bare names are looked up on PATH.
      const fs::path f = j["ffmpeg"].get<std::string>();
      ffmpeg = f.has_parent_path() ? resolve(f, base) : f;
    }
    video_encoder = j.value("video_encoder", video_encoder);
    if (j.contains("backend")) backend_manifest = resolve(j["backend"].get<std::string>(), base);
    if (j.contains("model")) model_override = resolve(j["model"].get<std::string>(), base);
    if (j.contains("labels")) labels = resolve(j["labels"].get<std::string>(), base);
    prompt_template = j.value("prompt_template", prompt_template);
    if (j.contains("photos")) photos = ProviderConfig::from_json(j["photos"], base);
    photo_count = j.value("photo_count", photo_count);
    sampling_rate = j.value("sampling_rate", sampling_rate);
    if (j.contains("smoothing_window") && !j["smoothing_window"].is_null())
      smoothing_window = j["smoothing_window"].get<int>();
    thumb_max_edge = j.value("thumb_max_edge", thumb_max_edge);
    host = j.value("host", host);
    port = j.value("port", port);
    if (j.contains("project_root")) project_root = resolve(j["project_root"].get<std::string>(), base);
    if (j.contains("cache_dir")) cache_dir = resolve(j["cache_dir"].get<std::string>(), base);
    if (j.contains("ui_dir")) ui_dir = resolve(j["ui_dir"].get<std::string>(), base);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_argument, std::string("config: ") + e.what());
  }
}

void Config::apply_env(const EnvLookup& env) {
  auto get = [&](const char* name) -> std::optional<std::string> {
    auto v = env(name);
    if (v && v->empty()) return std::nullopt;
    return v;
  };
  if (auto v = get("PHOTOPRIOR_FFMPEG")) ffmpeg = *v;
  if (auto v = get("PHOTOPRIOR_BACKEND")) backend_manifest = *v;
  if (auto v = get("PHOTOPRIOR_MODEL")) model_override = fs::path(*v);
  if (auto v = get("PHOTOPRIOR_LABELS")) labels = *v;
  if (auto v = get("PHOTOPRIOR_PROJECTS")) project_root = *v;
  if (auto v = get("PHOTOPRIOR_CACHE")) cache_dir = *v;
  if (auto v = get("PHOTOPRIOR_PHOTOS")) {
    photos = ProviderConfig{};
    photos.kind = "local_folder";
    photos.root = *v;
    photos.layout = LocalFolderProvider::Layout::per_keyword;
  }
  if (auto v = get("PHOTOPRIOR_PORT")) {
    try {
      port = std::stoi(*v);
    } catch (const std::exception&) {
      throw Error(Errc::invalid_argument, "PHOTOPRIOR_PORT is not a number");
    }
  }
}

BackendSpec Config::backend_spec() const {
  auto spec = BackendSpec::load(backend_manifest);
  if (model_override) spec.model_path = *model_override;
  return spec;
}

}  // namespace photoprior
