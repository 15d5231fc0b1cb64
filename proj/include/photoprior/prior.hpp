#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "photoprior/embedding.hpp"
#include "photoprior/image.hpp"

namespace photoprior {

inline constexpr int kDefaultPhotoCount = 10;
inline constexpr int kPriorSchemaVersion = 1;

struct PhotoSet {
  std::vector<RgbImage> images;
  std::vector<std::string> refs;  // URL or path per image, same order
  std::vector<std::string> warnings;
};

// Source of exemplar photographs for a keyword.
class PhotoProvider {
 public:
  virtual ~PhotoProvider() = default;
  virtual std::string_view kind() const = 0;
  /// Stable identity of the provider configuration and, for local folders,
  /// of the folder contents.
  virtual std::string fingerprint(std::string_view keyword) const = 0;
  /// Up to n photos in provider ranking order; may return fewer.
  virtual PhotoSet fetch(std::string_view keyword, int n) const = 0;
};

// Photos read from disk in lexicographic filename order. With per_keyword
// layout the photos for "surfing" live in <root>/surfing/; with flat layout
// the root itself is the collection (personal photo sets).
class LocalFolderProvider final : public PhotoProvider {
 public:
  enum class Layout { flat, per_keyword };
  LocalFolderProvider(std::filesystem::path root, Layout layout);

  std::string_view kind() const override { return "local_folder"; }
  std::string fingerprint(std::string_view keyword) const override;
  PhotoSet fetch(std::string_view keyword, int n) const override;

  std::filesystem::path folder_for(std::string_view keyword) const;

 private:
  std::vector<std::filesystem::path> list(std::string_view keyword) const;

  std::filesystem::path root_;
  Layout layout_;
};

// Keyword search over HTTP: GET <endpoint>?q=<keyword>&n=<n> answering
// {"results": [{"url": ..., <rank_field>: ...}, ...]}. Results are ordered by
// rank_field ascending when present, otherwise by array order, and each URL is
// downloaded into cache_dir.
class HttpSearchProvider final : public PhotoProvider {
 public:
  struct Options {
    std::string endpoint;
    std::string token;
    std::string rank_field = "rank";
    std::filesystem::path cache_dir;
  };
  explicit HttpSearchProvider(Options options);

  std::string_view kind() const override { return "http_search"; }
  std::string fingerprint(std::string_view keyword) const override;
  PhotoSet fetch(std::string_view keyword, int n) const override;

 private:
  Options opts_;
};

struct ProviderConfig {
  std::string kind = "local_folder";
  std::filesystem::path root;
  LocalFolderProvider::Layout layout = LocalFolderProvider::Layout::per_keyword;
  HttpSearchProvider::Options http;

  static ProviderConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
};

std::unique_ptr<PhotoProvider> make_provider(const ProviderConfig& config);

/// Fetches photos, adding a shortfall warning when fewer than n arrive.
/// Zero photos is an empty_result error.
PhotoSet fetch_photos(std::string_view keyword, const PhotoProvider& provider, int n = kDefaultPhotoCount);

/// Reads an explicit list of photo files (personal uploads).
PhotoSet load_photos(std::span<const std::filesystem::path> paths);

// Averaged-photograph prior. mean_embedding is the arithmetic mean of the
// unit photo embeddings and is deliberately left unnormalized.
struct PriorProfile {
  std::string id;
  std::string keyword;
  std::vector<std::string> photo_refs;
  std::vector<EmbeddingVector> photo_embeddings;
  std::vector<double> mean_embedding;
  std::string created_at;  // ISO-8601 UTC
  std::string backend_fingerprint;

  nlohmann::json to_json() const;
  static PriorProfile from_json(const nlohmann::json& j);
  bool operator==(const PriorProfile&) const = default;
};

/// Component-wise mean of embeddings, accumulated in double.
std::vector<double> mean_embedding(std::span<const EmbeddingVector> embeddings);

PriorProfile build_prior_from_embeddings(std::vector<EmbeddingVector> embeddings, std::vector<std::string> refs,
                                         std::string keyword, std::string backend_fingerprint);

/// Encodes each image and averages. An image that fails to encode is named
/// in the error by its ref.
PriorProfile build_prior_from_images(std::span<const RgbImage> images, std::span<const std::string> refs,
                                     std::string keyword, const EmbeddingBackend& backend);
PriorProfile build_prior_from_images(std::span<const RgbImage> images, std::string keyword,
                                     const EmbeddingBackend& backend);

/// fetch_photos + build_prior_from_images. Shortfall warnings are appended to
/// `warnings` when given.
PriorProfile build_prior(std::string_view keyword, const PhotoProvider& provider, int n,
                         const EmbeddingBackend& backend, std::vector<std::string>* warnings = nullptr);

/// Cache key for a prior: (keyword, provider fingerprint, backend fingerprint).
std::string prior_cache_key(std::string_view keyword, const PhotoProvider& provider,
                            const EmbeddingBackend& backend);

}  // namespace photoprior
