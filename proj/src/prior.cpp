#include "photoprior/prior.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <sstream>

#include "photoprior/error.hpp"
#include "photoprior/files.hpp"
#include "photoprior/hash.hpp"

namespace fs = std::filesystem;

namespace photoprior {
namespace {

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png" || ext == ".bmp" || ext == ".webp" || ext == ".tif" ||
         ext == ".tiff";
}

std::string utc_now_iso() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string target;  // /path?query
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(Errc::invalid_argument, "not an absolute URL: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

httplib::Result http_get(const std::string& url, const std::string& token) {
  const auto parts = split_url(url);
  httplib::Client client(parts.origin);
  client.set_connection_timeout(10);
  client.set_read_timeout(30);
  client.set_follow_location(true);
  httplib::Headers headers;
  if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);
  return client.Get(parts.target, headers);
}

}  // namespace

// ---------------------------------------------------------------------------
// Local folders

LocalFolderProvider::LocalFolderProvider(fs::path root, Layout layout) : root_(std::move(root)), layout_(layout) {}

fs::path LocalFolderProvider::folder_for(std::string_view keyword) const {
  if (layout_ == Layout::flat) return root_;
  if (keyword.empty()) throw Error(Errc::invalid_argument, "keyword required for a per-keyword photo library");
  if (keyword.find('/') != std::string_view::npos || keyword == ".." || keyword == ".")
    throw Error(Errc::invalid_argument, "keyword is not a valid folder name");
  return root_ / std::string(keyword);
}

std::vector<fs::path> LocalFolderProvider::list(std::string_view keyword) const {
  const auto folder = folder_for(keyword);
  if (!fs::is_directory(folder)) throw Error(Errc::not_found, "photo folder not found: " + folder.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(folder))
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  return files;
}

std::string LocalFolderProvider::fingerprint(std::string_view keyword) const {
  std::ostringstream os;
  os << "local_folder|" << fs::absolute(folder_for(keyword)).lexically_normal().string();
  for (const auto& f : list(keyword)) {
    os << "|" << f.filename().string() << ":" << fs::file_size(f) << ":"
       << fs::last_write_time(f).time_since_epoch().count();
  }
  return sha256_hex(os.str()).substr(0, 16);
}

PhotoSet LocalFolderProvider::fetch(std::string_view keyword, int n) const {
  auto files = list(keyword);
  if (files.size() > static_cast<size_t>(n)) files.resize(static_cast<size_t>(n));
  return load_photos(files);
}

PhotoSet load_photos(std::span<const fs::path> paths) {
  PhotoSet set;
  for (const auto& p : paths) {
    set.images.push_back(load_image(p));
    set.refs.push_back(p.string());
  }
  return set;
}

// ---------------------------------------------------------------------------
// HTTP search

HttpSearchProvider::HttpSearchProvider(Options options) : opts_(std::move(options)) {
  if (opts_.endpoint.empty()) throw Error(Errc::invalid_argument, "http_search provider needs an endpoint");
  split_url(opts_.endpoint);
}

std::string HttpSearchProvider::fingerprint(std::string_view keyword) const {
  return sha256_hex("http_search|" + opts_.endpoint + "|" + opts_.rank_field + "|" + std::string(keyword))
      .substr(0, 16);
}

PhotoSet HttpSearchProvider::fetch(std::string_view keyword, int n) const {
  const std::string query = opts_.endpoint + (opts_.endpoint.find('?') == std::string::npos ? "?" : "&") +
                            "q=" + httplib::detail::encode_query_param(std::string(keyword)) +
                            "&n=" + std::to_string(n);
  auto res = http_get(query, opts_.token);
  if (!res) throw Error(Errc::provider, "photo search endpoint unreachable: " + opts_.endpoint);
  if (res->status != 200)
    throw Error(Errc::provider, "photo search returned HTTP " + std::to_string(res->status));

  struct Hit {
    std::string url;
    double rank;
    size_t order;
  };
  std::vector<Hit> hits;
  try {
    const auto body = nlohmann::json::parse(res->body);
    size_t order = 0;
    for (const auto& r : body.at("results")) {
      Hit h{r.at("url").get<std::string>(), 0.0, order++};
      h.rank = r.contains(opts_.rank_field) ? r[opts_.rank_field].get<double>() : static_cast<double>(h.order);
      hits.push_back(std::move(h));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::provider, std::string("malformed photo search response: ") + e.what());
  }
  std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.rank < b.rank; });
  if (hits.size() > static_cast<size_t>(n)) hits.resize(static_cast<size_t>(n));

  PhotoSet set;
  for (const auto& h : hits) {
    std::vector<std::uint8_t> bytes;
    const auto cached = opts_.cache_dir.empty() ? fs::path() : opts_.cache_dir / sha256_hex(h.url).substr(0, 24);
    if (!cached.empty() && fs::is_regular_file(cached)) {
      bytes = read_file(cached);
    } else {
      auto img = http_get(h.url, opts_.token);
      if (!img || img->status != 200) {
        set.warnings.push_back("could not download " + h.url);
        continue;
      }
      bytes.assign(img->body.begin(), img->body.end());
      if (!cached.empty()) write_file_atomic(cached, bytes);
    }
    try {
      set.images.push_back(decode_image(bytes));
      set.refs.push_back(h.url);
    } catch (const Error&) {
      set.warnings.push_back("could not decode " + h.url);
    }
  }
  return set;
}

// ---------------------------------------------------------------------------

ProviderConfig ProviderConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  ProviderConfig c;
  c.kind = j.value("kind", c.kind);
  if (c.kind == "local_folder") {
    fs::path root = j.at("root").get<std::string>();
    c.root = (root.is_relative() && !base_dir.empty()) ? base_dir / root : root;
    const auto layout = j.value("layout", std::string("per_keyword"));
    if (layout == "flat") c.layout = LocalFolderProvider::Layout::flat;
    else if (layout == "per_keyword") c.layout = LocalFolderProvider::Layout::per_keyword;
    else throw Error(Errc::invalid_argument, "photo layout must be 'flat' or 'per_keyword'");
  } else if (c.kind == "http_search") {
    c.http.endpoint = j.at("endpoint").get<std::string>();
    c.http.token = j.value("token", "");
    c.http.rank_field = j.value("rank_field", c.http.rank_field);
    if (j.contains("cache_dir")) c.http.cache_dir = j["cache_dir"].get<std::string>();
  } else {
    throw Error(Errc::invalid_argument, "unknown photo provider kind '" + c.kind + "'");
  }
  return c;
}

std::unique_ptr<PhotoProvider> make_provider(const ProviderConfig& config) {
  if (config.kind == "local_folder") {
    if (config.root.empty()) throw Error(Errc::invalid_argument, "local_folder provider needs a root folder");
    return std::make_unique<LocalFolderProvider>(config.root, config.layout);
  }
  if (config.kind == "http_search") return std::make_unique<HttpSearchProvider>(config.http);
  throw Error(Errc::invalid_argument, "unknown photo provider kind '" + config.kind + "'");
}

PhotoSet fetch_photos(std::string_view keyword, const PhotoProvider& provider, int n) {
  if (n < 1) throw Error(Errc::invalid_argument, "photo count must be at least 1");
  PhotoSet set;
  try {
    set = provider.fetch(keyword, n);
  } catch (const Error& e) {
    throw Error(e.code(), std::string(provider.kind()) + " provider, keyword '" + std::string(keyword) +
                              "': " + e.what());
  }
  if (set.images.empty())
    throw Error(Errc::empty_result, "no photos found for keyword '" + std::string(keyword) + "'");
  if (set.images.size() < static_cast<size_t>(n))
    set.warnings.push_back("only " + std::to_string(set.images.size()) + " of " + std::to_string(n) +
                           " requested photos available for '" + std::string(keyword) + "'");
  return set;
}

// ---------------------------------------------------------------------------
// Profiles

std::vector<double> mean_embedding(std::span<const EmbeddingVector> embeddings) {
  if (embeddings.empty()) throw Error(Errc::invalid_argument, "mean of zero embeddings");
  const size_t dim = embeddings.front().dim();
  std::vector<double> sum(dim, 0.0);
  for (const auto& e : embeddings) {
    if (e.dim() != dim) throw Error(Errc::dimension_mismatch, "photo embeddings differ in dimension");
    for (size_t i = 0; i < dim; ++i) sum[i] += e[i];
  }
  const double n = static_cast<double>(embeddings.size());
  for (double& x : sum) x /= n;
  return sum;
}

PriorProfile build_prior_from_embeddings(std::vector<EmbeddingVector> embeddings, std::vector<std::string> refs,
                                         std::string keyword, std::string backend_fingerprint) {
  if (embeddings.empty()) throw Error(Errc::invalid_argument, "a prior needs at least one photo");
  if (refs.size() != embeddings.size()) throw Error(Errc::invalid_argument, "one ref per photo embedding required");
  PriorProfile p;
  p.keyword = std::move(keyword);
  p.photo_refs = std::move(refs);
  p.photo_embeddings = std::move(embeddings);
  p.mean_embedding = mean_embedding(p.photo_embeddings);
  p.created_at = utc_now_iso();
  p.backend_fingerprint = std::move(backend_fingerprint);

  // Content-addressed: identical inputs give the identical id.
  std::ostringstream os;
  os << p.backend_fingerprint << "|" << p.keyword;
  for (const auto& r : p.photo_refs) os << "|" << r;
  std::string blob = os.str();
  for (const auto& e : p.photo_embeddings)
    blob.append(reinterpret_cast<const char*>(e.values().data()), e.dim() * sizeof(float));
  p.id = sha256_hex(blob).substr(0, 12);
  return p;
}

PriorProfile build_prior_from_images(std::span<const RgbImage> images, std::span<const std::string> refs,
                                     std::string keyword, const EmbeddingBackend& backend) {
  if (images.empty()) throw Error(Errc::invalid_argument, "a prior needs at least one photo");
  if (refs.size() != images.size()) throw Error(Errc::invalid_argument, "one ref per photo required");
  std::vector<EmbeddingVector> embeddings;
  embeddings.reserve(images.size());
  for (size_t i = 0; i < images.size(); ++i) {
    try {
      embeddings.push_back(backend.encode_image(images[i]));
    } catch (const Error& e) {
      throw Error(e.code(), "photo " + refs[i] + ": " + e.what());
    }
  }
  return build_prior_from_embeddings(std::move(embeddings), {refs.begin(), refs.end()}, std::move(keyword),
                                     backend.fingerprint());
}

PriorProfile build_prior_from_images(std::span<const RgbImage> images, std::string keyword,
                                     const EmbeddingBackend& backend) {
  std::vector<std::string> refs;
  for (size_t i = 0; i < images.size(); ++i) refs.push_back("image[" + std::to_string(i) + "]");
  return build_prior_from_images(images, refs, std::move(keyword), backend);
}

PriorProfile build_prior(std::string_view keyword, const PhotoProvider& provider, int n,
                         const EmbeddingBackend& backend, std::vector<std::string>* warnings) {
  auto photos = fetch_photos(keyword, provider, n);
  if (warnings) warnings->insert(warnings->end(), photos.warnings.begin(), photos.warnings.end());
  return build_prior_from_images(photos.images, photos.refs, std::string(keyword), backend);
}

std::string prior_cache_key(std::string_view keyword, const PhotoProvider& provider,
                            const EmbeddingBackend& backend) {
  return sha256_hex(std::string(keyword) + "|" + provider.fingerprint(keyword) + "|" + backend.fingerprint())
      .substr(0, 24);
}

nlohmann::json PriorProfile::to_json() const {
  nlohmann::json photos = nlohmann::json::array();
  for (const auto& e : photo_embeddings) photos.push_back(std::vector<float>(e.values().begin(), e.values().end()));
  return {{"schema_version", kPriorSchemaVersion},
          {"prior_id", id},
          {"keyword", keyword},
          {"photo_refs", photo_refs},
          {"photo_embeddings", photos},
          {"mean_embedding", mean_embedding},
          {"created_at", created_at},
          {"backend_fingerprint", backend_fingerprint}};
}

PriorProfile PriorProfile::from_json(const nlohmann::json& j) {
  PriorProfile p;
  try {
    const int version = j.at("schema_version").get<int>();
    if (version > kPriorSchemaVersion)
      throw Error(Errc::unsupported_version, "prior schema " + std::to_string(version) + " is newer than " +
                                                 std::to_string(kPriorSchemaVersion));
    p.id = j.at("prior_id").get<std::string>();
    p.keyword = j.at("keyword").get<std::string>();
    p.photo_refs = j.at("photo_refs").get<std::vector<std::string>>();
    for (const auto& e : j.at("photo_embeddings"))
      p.photo_embeddings.push_back(EmbeddingVector::from_unit(e.get<std::vector<float>>()));
    p.mean_embedding = j.at("mean_embedding").get<std::vector<double>>();
    p.created_at = j.value("created_at", "");
    p.backend_fingerprint = j.at("backend_fingerprint").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_argument, std::string("malformed prior: ") + e.what());
  }
  if (p.photo_embeddings.empty() || p.photo_refs.size() != p.photo_embeddings.size() ||
      p.mean_embedding.size() != p.photo_embeddings.front().dim())
    throw Error(Errc::invalid_argument, "prior arrays are inconsistent");
  return p;
}

}  // namespace photoprior
