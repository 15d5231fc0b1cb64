#include <gtest/gtest.h>

#include <fstream>
#include <map>

#include "fixtures.hpp"
#include "photoprior/config.hpp"
#include "photoprior/error.hpp"

namespace fs = std::filesystem;
using namespace photoprior;
using namespace photoprior::testing;

namespace {

EnvLookup env_of(std::map<std::string, std::string> vars) {
  return [vars = std::move(vars)](const char* name) -> std::optional<std::string> {
    if (auto it = vars.find(name); it != vars.end()) return it->second;
    return std::nullopt;
  };
}

}  // namespace

TEST(Config, Defaults) {
  const auto c = Config::load(std::nullopt, env_of({{"HOME", "/home/someone"}}));
  EXPECT_EQ(c.port, 8470);
  EXPECT_EQ(c.host, "127.0.0.1");
  EXPECT_EQ(c.photo_count, 10);
  EXPECT_DOUBLE_EQ(c.sampling_rate, 1.0);
  EXPECT_FALSE(c.smoothing_window);
  EXPECT_EQ(c.cache_dir, fs::path("/home/someone/.cache/photoprior"));
  EXPECT_TRUE(fs::is_regular_file(c.backend_manifest));
  EXPECT_TRUE(fs::is_regular_file(c.labels));
  EXPECT_EQ(c.photos.kind, "local_folder");
}

TEST(Config, XdgCacheWins) {
  const auto c = Config::load(std::nullopt, env_of({{"HOME", "/h"}, {"XDG_CACHE_HOME", "/x"}}));
  EXPECT_EQ(c.cache_dir, fs::path("/x/photoprior"));
}

TEST(Config, FileValuesResolveAgainstItsFolder) {
  TempDir tmp;
  {
    std::ofstream out(tmp / "config.json");
    out << R"({"port": 9001, "sampling_rate": 2, "smoothing_window": 3, "labels": "labels.txt",
               "photos": {"kind": "local_folder", "root": "pics", "layout": "flat"},
               "ffmpeg": "ffmpeg", "cache_dir": "cache"})";
  }
  const auto c = Config::load(tmp / "config.json", env_of({}));
  EXPECT_EQ(c.port, 9001);
  EXPECT_DOUBLE_EQ(c.sampling_rate, 2.0);
  EXPECT_EQ(c.smoothing_window, 3);
  EXPECT_EQ(c.labels, tmp / "labels.txt");
  EXPECT_EQ(c.photos.root, tmp / "pics");
  EXPECT_EQ(c.photos.layout, LocalFolderProvider::Layout::flat);
  EXPECT_EQ(c.ffmpeg, fs::path("ffmpeg"));
  EXPECT_EQ(c.cache_dir, tmp / "cache");
}

TEST(Config, EnvironmentOverridesFile) {
  TempDir tmp;
  { std::ofstream(tmp / "config.json") << R"({"port": 9001, "ffmpeg": "/opt/ffmpeg"})"; }
  const auto c = Config::load(std::nullopt, env_of({{"PHOTOPRIOR_CONFIG", (tmp / "config.json").string()},
                                                    {"PHOTOPRIOR_PORT", "9100"},
                                                    {"PHOTOPRIOR_PHOTOS", "/srv/photos"},
                                                    {"PHOTOPRIOR_CACHE", "/tmp/c"}}));
  EXPECT_EQ(c.port, 9100);
  EXPECT_EQ(c.ffmpeg, fs::path("/opt/ffmpeg"));
  EXPECT_EQ(c.photos.root, fs::path("/srv/photos"));
  EXPECT_EQ(c.cache_dir, fs::path("/tmp/c"));
}

TEST(Config, RejectsBadValues) {
  TempDir tmp;
  EXPECT_THROW(Config::load(std::nullopt, env_of({{"PHOTOPRIOR_PORT", "eighty"}})), Error);
  EXPECT_THROW(Config::load(std::nullopt, env_of({{"PHOTOPRIOR_PORT", "70000"}})), Error);
  { std::ofstream(tmp / "bad.json") << R"({"port": "x"})"; }
  EXPECT_THROW(Config::load(tmp / "bad.json", env_of({})), Error);
  { std::ofstream(tmp / "rate.json") << R"({"sampling_rate": 0})"; }
  EXPECT_THROW(Config::load(tmp / "rate.json", env_of({})), Error);
  { std::ofstream(tmp / "broken.json") << "{"; }
  EXPECT_THROW(Config::load(tmp / "broken.json", env_of({})), Error);
  try {
    Config::load(tmp / "absent.json", env_of({}));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::not_found);
  }
}

TEST(Config, ModelOverrideAppliesToSpec) {
  auto c = Config::load(std::nullopt, env_of({{"PHOTOPRIOR_MODEL", "/models/other.onnx"}}));
  EXPECT_EQ(c.backend_spec().model_path, fs::path("/models/other.onnx"));
  c.model_override.reset();
  EXPECT_EQ(c.backend_spec(), BackendSpec::load(c.backend_manifest));
}
