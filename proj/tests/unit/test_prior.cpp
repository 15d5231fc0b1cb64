#include <gtest/gtest.h>

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include "fixtures.hpp"
#include "photoprior/error.hpp"
#include "photoprior/prior.hpp"

namespace fs = std::filesystem;
using namespace photoprior;
using namespace photoprior::testing;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return Errc::io;
}

// Folder of solid images named so lexicographic order differs from creation order.
void write_solid_photos(const fs::path& dir, const std::vector<std::pair<std::string, std::uint8_t>>& items) {
  fs::create_directories(dir);
  for (const auto& [name, red] : items) save_image(solid_image(8, 8, red, 0, 0), dir / name);
}

std::vector<EmbeddingVector> unit_vectors(std::size_t count, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<EmbeddingVector> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(EmbeddingVector::normalized(random_unit(dim, rng)));
  return out;
}

}  // namespace

TEST(MeanEmbedding, SinglePhotoPriorEqualsItsEmbedding) {
  auto e = unit_vectors(1, 16, 1);
  auto prior = build_prior_from_embeddings(e, {"a"}, "k", "fp");
  ASSERT_EQ(prior.mean_embedding.size(), 16u);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_DOUBLE_EQ(prior.mean_embedding[i], e[0][i]);
}

TEST(MeanEmbedding, OrthogonalPairHasNormOneOverRootTwo) {
  auto stub = color_keyed_stub(8);
  std::vector<RgbImage> images{solid_image(4, 4, 0, 0, 0), solid_image(4, 4, 1, 0, 0)};
  auto prior = build_prior_from_images(images, "pair", *stub);
  EXPECT_DOUBLE_EQ(prior.mean_embedding[0], 0.5);
  EXPECT_DOUBLE_EQ(prior.mean_embedding[1], 0.5);
  EXPECT_NEAR(l2_norm(prior.mean_embedding), 1.0 / std::sqrt(2.0), 1e-6);
}

TEST(MeanEmbedding, TenCopiesEqualOne) {
  auto e = unit_vectors(1, 32, 2);
  std::vector<EmbeddingVector> copies(10, e[0]);
  auto mean = mean_embedding(copies);
  for (std::size_t i = 0; i < 32; ++i) EXPECT_NEAR(mean[i], e[0][i], 1e-7);
}

TEST(MeanEmbedding, PermutationInvariant) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto e = unit_vectors(2 + trial % 12, 64, 100 + trial);
    auto base = mean_embedding(e);
    std::shuffle(e.begin(), e.end(), rng);
    auto shuffled = mean_embedding(e);
    for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NEAR(base[i], shuffled[i], 1e-12);
  }
}

TEST(MeanEmbedding, NeverRenormalized) {
  for (int trial = 0; trial < 50; ++trial) {
    auto e = unit_vectors(2 + trial % 5, 16, 200 + trial);
    EXPECT_LT(l2_norm(mean_embedding(e)), 1.0);
    std::vector<EmbeddingVector> same(3, e[0]);
    EXPECT_NEAR(l2_norm(mean_embedding(same)), 1.0, 1e-6);
  }
}

TEST(MeanEmbedding, DuplicatePullsMeanTowardIt) {
  for (int trial = 0; trial < 100; ++trial) {
    auto e = unit_vectors(3 + trial % 8, 32, 300 + trial);
    const auto dup = e[trial % e.size()];
    const double before = cosine(mean_embedding(e), dup.values());
    e.push_back(dup);
    const double after = cosine(mean_embedding(e), dup.values());
    EXPECT_GE(after, before - 1e-12);
  }
}

TEST(MeanEmbedding, MatchesPlainAverage) {
  auto e = unit_vectors(10, 512, 4);
  auto mean = mean_embedding(e);
  for (std::size_t k = 0; k < 512; ++k) {
    double s = 0.0;
    for (const auto& v : e) s += v[k];
    EXPECT_NEAR(mean[k], s / 10.0, 1e-6);
  }
}

TEST(PriorProfile, RecordsFingerprintAndRefs) {
  auto stub = color_keyed_stub(8);
  std::vector<RgbImage> images{solid_image(4, 4, 2, 0, 0), solid_image(4, 4, 3, 0, 0)};
  std::vector<std::string> refs{"/p/a.png", "/p/b.png"};
  auto prior = build_prior_from_images(images, refs, "surfing", *stub);
  EXPECT_EQ(prior.backend_fingerprint, "stub");
  EXPECT_EQ(prior.photo_refs, refs);
  EXPECT_EQ(prior.photo_embeddings.size(), 2u);
  EXPECT_EQ(prior.keyword, "surfing");
  EXPECT_FALSE(prior.id.empty());
  EXPECT_FALSE(prior.created_at.empty());
}

TEST(PriorProfile, JsonRoundTrip) {
  auto prior = build_prior_from_embeddings(unit_vectors(3, 8, 5), {"a", "b", "c"}, "k", "fp");
  EXPECT_EQ(PriorProfile::from_json(prior.to_json()), prior);
  auto j = prior.to_json();
  j["schema_version"] = kPriorSchemaVersion + 1;
  EXPECT_EQ(code_of([&] { PriorProfile::from_json(j); }), Errc::unsupported_version);
}

TEST(PriorProfile, EncodeFailureNamesImage) {
  auto stub = color_keyed_stub(8);
  std::vector<RgbImage> images{solid_image(4, 4, 2, 0, 0), RgbImage{}};
  std::vector<std::string> refs{"good.png", "broken.png"};
  try {
    build_prior_from_images(images, refs, "k", *stub);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("broken.png"), std::string::npos) << e.what();
  }
  EXPECT_EQ(code_of([&] { build_prior_from_images({}, "k", *stub); }), Errc::invalid_argument);
}

TEST(LocalFolderProvider, LexicographicOrder) {
  TempDir tmp;
  write_solid_photos(tmp / "surfing", {{"c.png", 2}, {"a.png", 0}, {"b.jpg", 1}});
  { std::ofstream(tmp / "surfing" / "readme.txt") << "not a photo"; }
  LocalFolderProvider provider(tmp.path(), LocalFolderProvider::Layout::per_keyword);
  auto photos = fetch_photos("surfing", provider, 10);
  ASSERT_EQ(photos.images.size(), 3u);
  EXPECT_EQ(fs::path(photos.refs[0]).filename(), "a.png");
  EXPECT_EQ(fs::path(photos.refs[1]).filename(), "b.jpg");
  EXPECT_EQ(fs::path(photos.refs[2]).filename(), "c.png");
  EXPECT_EQ(photos.images[0].pixels[0], 0);
  EXPECT_EQ(photos.images[2].pixels[0], 2);
}

TEST(LocalFolderProvider, TakesFirstN) {
  TempDir tmp;
  std::vector<std::pair<std::string, std::uint8_t>> items;
  for (int i = 0; i < 12; ++i) items.emplace_back("p" + std::to_string(100 + i) + ".png", static_cast<std::uint8_t>(i));
  write_solid_photos(tmp.path(), items);
  LocalFolderProvider provider(tmp.path(), LocalFolderProvider::Layout::flat);
  auto photos = fetch_photos("", provider, 10);
  EXPECT_EQ(photos.images.size(), 10u);
  EXPECT_TRUE(photos.warnings.empty());
}

TEST(LocalFolderProvider, ShortfallWarns) {
  TempDir tmp;
  write_solid_photos(tmp.path(), {{"1.png", 1}, {"2.png", 2}, {"3.png", 3}, {"4.png", 4}});
  LocalFolderProvider provider(tmp.path(), LocalFolderProvider::Layout::flat);
  auto photos = fetch_photos("", provider, 10);
  EXPECT_EQ(photos.images.size(), 4u);
  ASSERT_EQ(photos.warnings.size(), 1u);
}

TEST(LocalFolderProvider, EmptyFolderIsAnError) {
  TempDir tmp;
  fs::create_directories(tmp / "nothing");
  LocalFolderProvider provider(tmp.path(), LocalFolderProvider::Layout::per_keyword);
  EXPECT_EQ(code_of([&] { fetch_photos("nothing", provider, 10); }), Errc::empty_result);
  EXPECT_EQ(code_of([&] { fetch_photos("absent", provider, 10); }), Errc::not_found);
  EXPECT_EQ(code_of([&] { fetch_photos("nothing", provider, 0); }), Errc::invalid_argument);
}

TEST(LocalFolderProvider, FingerprintFollowsContents) {
  TempDir tmp;
  write_solid_photos(tmp / "k", {{"a.png", 1}});
  LocalFolderProvider provider(tmp.path(), LocalFolderProvider::Layout::per_keyword);
  const auto before = provider.fingerprint("k");
  EXPECT_EQ(provider.fingerprint("k"), before);
  write_solid_photos(tmp / "k", {{"b.png", 2}});
  EXPECT_NE(provider.fingerprint("k"), before);
}

TEST(BuildPrior, ComposesFetchAndEncode) {
  TempDir tmp;
  std::vector<std::pair<std::string, std::uint8_t>> items;
  for (int i = 0; i < 10; ++i) items.emplace_back("img" + std::to_string(i) + ".png", static_cast<std::uint8_t>(i));
  write_solid_photos(tmp / "skydiving", items);
  LocalFolderProvider provider(tmp.path(), LocalFolderProvider::Layout::per_keyword);
  auto stub = color_keyed_stub(16);
  auto prior = build_prior("skydiving", provider, kDefaultPhotoCount, *stub);
  EXPECT_EQ(prior.photo_embeddings.size(), 10u);
  EXPECT_EQ(prior.keyword, "skydiving");
  for (int i = 0; i < 10; ++i) EXPECT_DOUBLE_EQ(prior.mean_embedding[i], 0.1);
}

TEST(BuildPrior, DefaultPhotoCountIsTen) { EXPECT_EQ(kDefaultPhotoCount, 10); }

TEST(BuildPrior, ProviderErrorCarriesContext) {
  HttpSearchProvider provider({"http://127.0.0.1:1/search", "", "rank", {}});
  auto stub = color_keyed_stub(8);
  try {
    build_prior("surfing", provider, 10, *stub);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::provider);
    EXPECT_NE(std::string(e.what()).find("surfing"), std::string::npos) << e.what();
  }
}

TEST(PriorCacheKey, DependsOnAllThreeParts) {
  TempDir tmp;
  write_solid_photos(tmp / "a", {{"1.png", 1}});
  write_solid_photos(tmp / "b", {{"1.png", 1}});
  LocalFolderProvider provider(tmp.path(), LocalFolderProvider::Layout::per_keyword);
  StubBackend other(8, [](const RgbImage&) { return basis(8, 0); }, {}, "other");
  auto stub = color_keyed_stub(8);
  const auto k = prior_cache_key("a", provider, *stub);
  EXPECT_EQ(k, prior_cache_key("a", provider, *stub));
  EXPECT_NE(k, prior_cache_key("b", provider, *stub));
  EXPECT_NE(k, prior_cache_key("a", provider, other));
}

TEST(HttpSearchProvider, FollowsEndpointRanking) {
  httplib::Server server;
  int port = 0;
  server.Get("/search", [&port](const httplib::Request& req, httplib::Response& res) {
    EXPECT_EQ(req.get_param_value("q"), "surfing");
    const std::string base = "http://127.0.0.1:" + std::to_string(port);
    nlohmann::json body = {{"results",
                            {{{"url", base + "/img/b"}, {"rank", 2}},
                             {{"url", base + "/img/a"}, {"rank", 1}},
                             {{"url", base + "/img/c"}, {"rank", 3}}}}};
    res.set_content(body.dump(), "application/json");
  });
  server.Get(R"(/img/(\w))", [](const httplib::Request& req, httplib::Response& res) {
    const std::uint8_t red = static_cast<std::uint8_t>(req.matches[1].str()[0] - 'a');
    const auto bytes = encode_jpeg(solid_image(8, 8, red * 100, 0, 0), 95);
    res.set_content(std::string(bytes.begin(), bytes.end()), "image/jpeg");
  });
  port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  TempDir cache;
  HttpSearchProvider provider(
      {"http://127.0.0.1:" + std::to_string(port) + "/search", "", "rank", cache.path()});
  auto photos = provider.fetch("surfing", 2);
  server.stop();
  t.join();

  ASSERT_EQ(photos.images.size(), 2u);
  EXPECT_NE(photos.refs[0].find("/img/a"), std::string::npos);
  EXPECT_NE(photos.refs[1].find("/img/b"), std::string::npos);
  EXPECT_NEAR(photos.images[0].pixels[0], 0, 6);
  EXPECT_NEAR(photos.images[1].pixels[0], 100, 6);
}

TEST(ProviderConfig, ParsesKinds) {
  auto local = ProviderConfig::from_json({{"kind", "local_folder"}, {"root", "photos"}, {"layout", "flat"}}, "/base");
  EXPECT_EQ(local.root, fs::path("/base/photos"));
  EXPECT_EQ(local.layout, LocalFolderProvider::Layout::flat);
  auto http = ProviderConfig::from_json({{"kind", "http_search"}, {"endpoint", "http://x/s"}});
  EXPECT_EQ(http.http.endpoint, "http://x/s");
  EXPECT_EQ(code_of([] { ProviderConfig::from_json({{"kind", "stock"}}); }), Errc::invalid_argument);
  EXPECT_THROW(ProviderConfig::from_json({{"kind", "http_search"}}), std::exception);
}
