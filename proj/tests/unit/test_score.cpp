#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "photoprior/error.hpp"
#include "photoprior/prior.hpp"
#include "photoprior/score.hpp"

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

PriorProfile prior_of(const std::vector<std::vector<float>>& photos, const std::string& fp = "stub") {
  std::vector<EmbeddingVector> e;
  std::vector<std::string> refs;
  for (const auto& p : photos) {
    e.push_back(EmbeddingVector::normalized(p));
    refs.push_back("p" + std::to_string(refs.size()));
  }
  return build_prior_from_embeddings(e, refs, "k", fp);
}

void expect_all_near(const std::vector<double>& got, const std::vector<double>& want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], tol) << "index " << i;
}

}  // namespace

TEST(ScoreFrames, MatchesNaiveOracle) {
  std::mt19937_64 rng(11);
  for (std::size_t dim : {8u, 64u, 512u}) {
    std::vector<std::vector<float>> photos, frames;
    for (int i = 0; i < 7; ++i) photos.push_back(random_unit(dim, rng));
    for (int i = 0; i < 40; ++i) frames.push_back(random_unit(dim, rng));
    const auto prior = prior_of(photos);
    const auto series = make_frames(frames, 1.0);
    std::vector<std::vector<float>> stored;
    for (std::size_t i = 0; i < series.size(); ++i)
      stored.emplace_back(series.embedding(i).begin(), series.embedding(i).end());
    expect_all_near(score_frames(prior, series), oracle::naive_scores(prior.mean_embedding, stored), 1e-6);
  }
}

TEST(ScoreFrames, FrameEqualToSinglePhotoScoresOne) {
  std::mt19937_64 rng(12);
  const auto v = random_unit(32, rng);
  const auto scores = score_frames(prior_of({v}), make_frames({v, random_unit(32, rng)}, 1.0));
  EXPECT_NEAR(scores[0], 1.0, 1e-6);
  EXPECT_LT(scores[1], 1.0);
}

TEST(ScoreFrames, OrthogonalFrameScoresZero) {
  const auto scores = score_frames(prior_of({basis(4, 0)}), make_frames({basis(4, 1), basis(4, 3)}, 1.0));
  EXPECT_DOUBLE_EQ(scores[0], 0.0);
  EXPECT_DOUBLE_EQ(scores[1], 0.0);
}

TEST(ScoreFrames, TwoPhotoMeanAgainstOneOfThem) {
  const auto scores = score_frames(prior_of({basis(4, 0), basis(4, 1)}), make_frames({basis(4, 0)}, 1.0));
  EXPECT_NEAR(scores[0], 0.5, 1e-9);
}

TEST(ScoreFrames, RejectsMismatchedBackends) {
  const auto frames = make_frames({basis(4, 0)}, 1.0, "backend-a");
  EXPECT_EQ(code_of([&] { score_frames(prior_of({basis(4, 0)}, "backend-b"), frames); }),
            Errc::fingerprint_mismatch);
  EXPECT_EQ(code_of([&] { score_frames(prior_of({basis(8, 0)}, "backend-a"), frames); }),
            Errc::dimension_mismatch);
}

TEST(ScoreFramesText, UsesPromptEmbedding) {
  auto stub = color_keyed_stub(4, {{"skydiving", basis(4, 2)}});
  const auto frames = make_frames({basis(4, 2), basis(4, 2), basis(4, 0)}, 1.0);
  const auto scores = score_frames_text("skydiving", frames, *stub);
  expect_all_near(scores, {1.0, 1.0, 0.0}, 1e-9);
  EXPECT_EQ(code_of([&] { score_frames_text("", frames, *stub); }), Errc::invalid_argument);

  StubBackend other(4, [](const RgbImage&) { return basis(4, 0); }, {}, "other");
  EXPECT_EQ(code_of([&] { score_frames_text("skydiving", frames, other); }), Errc::fingerprint_mismatch);
}

TEST(NormalizeScores, Examples) {
  expect_all_near(normalize_scores(std::vector<double>{2, 4, 6}), {0.0, 0.5, 1.0}, 1e-12);
  expect_all_near(normalize_scores(std::vector<double>{-0.1, 0.0, 0.3}), {0.0, 0.25, 1.0}, 1e-12);
  expect_all_near(normalize_scores(std::vector<double>{0.7, 0.7, 0.7}), {0.5, 0.5, 0.5}, 0.0);
  expect_all_near(normalize_scores(std::vector<double>{3.0}), {0.5}, 0.0);
}

TEST(NormalizeScores, RejectsEmptyAndNonFinite) {
  EXPECT_EQ(code_of([] { normalize_scores(std::vector<double>{}); }), Errc::invalid_argument);
  EXPECT_EQ(code_of([] { normalize_scores(std::vector<double>{1.0, NAN}); }), Errc::invalid_argument);
  EXPECT_EQ(code_of([] { normalize_scores(std::vector<double>{INFINITY, 0.0}); }), Errc::invalid_argument);
}

TEST(NormalizeScores, PropertiesOnRandomSeries) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> raw(2 + trial % 300);
    for (auto& x : raw) x = u(rng);
    const auto n = normalize_scores(raw);
    EXPECT_EQ(*std::min_element(n.begin(), n.end()), 0.0);
    EXPECT_EQ(*std::max_element(n.begin(), n.end()), 1.0);
    expect_all_near(n, oracle::min_max(raw), 1e-12);
    for (std::size_t i = 0; i + 1 < raw.size(); ++i)
      if (raw[i] < raw[i + 1]) EXPECT_LE(n[i], n[i + 1]);

    const double a = scale(rng);
    const double b = u(rng);
    std::vector<double> affine(raw.size());
    std::transform(raw.begin(), raw.end(), affine.begin(), [&](double x) { return a * x + b; });
    expect_all_near(normalize_scores(affine), n, 1e-9);
  }
}

TEST(SmoothScores, WindowOneIsIdentity) {
  std::vector<double> v{0.3, 0.1, 0.9};
  EXPECT_EQ(smooth_scores(v, 1), v);
}

TEST(SmoothScores, TruncatesAtEdges) {
  expect_all_near(smooth_scores(std::vector<double>{0, 1, 0}, 3), {0.5, 1.0 / 3.0, 0.5}, 1e-12);
  expect_all_near(smooth_scores(std::vector<double>{1, 2, 3, 4, 5}, 5), {2.0, 2.5, 3.0, 3.5, 4.0}, 1e-12);
}

TEST(SmoothScores, RejectsBadWindows) {
  const std::vector<double> v{1, 2, 3};
  EXPECT_EQ(code_of([&] { smooth_scores(v, 2); }), Errc::invalid_argument);
  EXPECT_EQ(code_of([&] { smooth_scores(v, 0); }), Errc::invalid_argument);
  EXPECT_EQ(code_of([&] { smooth_scores(v, 5); }), Errc::invalid_argument);
}

TEST(MakeScoreSeries, SmoothsBeforeNormalizing) {
  const auto frames = make_frames({basis(2, 0), basis(2, 0), basis(2, 0)}, 2.0);
  const auto s = make_score_series({0.0, 1.0, 0.0}, frames, Provenance::from_prompt("p"), 3);
  expect_all_near(s.raw, {0.5, 1.0 / 3.0, 0.5}, 1e-12);
  expect_all_near(s.normalized, {1.0, 0.0, 1.0}, 1e-12);
  EXPECT_EQ(s.smoothing_window, 3);
  EXPECT_EQ(s.timestamps, (std::vector<double>{0.0, 0.5, 1.0}));
  EXPECT_DOUBLE_EQ(s.sampling_rate, 2.0);
  EXPECT_NO_THROW(s.validate());

  const auto plain = make_score_series({0.0, 1.0, 0.0}, frames, Provenance::from_prompt("p"));
  EXPECT_FALSE(plain.smoothing_window);
  EXPECT_NE(plain.id, s.id);
  EXPECT_EQ(code_of([&] { make_score_series({0.0}, frames, Provenance::from_prompt("p")); }),
            Errc::invalid_argument);
}

TEST(ScoreSeries, JsonRoundTrip) {
  auto s = make_series({0.1, 0.5, 0.3, 0.9});
  s.smoothing_window = 3;
  EXPECT_EQ(ScoreSeries::from_json(s.to_json()), s);

  const auto prior = prior_of({basis(3, 0)});
  s.provenance = Provenance::from_prior(prior);
  s.smoothing_window.reset();
  const auto j = s.to_json();
  EXPECT_EQ(j.at("provenance").at("prior_id"), prior.id);
  EXPECT_TRUE(j.at("smoothing").is_null());
  EXPECT_EQ(ScoreSeries::from_json(j), s);
}

TEST(ScoreSeries, NewerSchemaRejected) {
  auto j = make_series({0.1, 0.2}).to_json();
  j["schema_version"] = kScoreSchemaVersion + 1;
  EXPECT_EQ(code_of([&] { ScoreSeries::from_json(j); }), Errc::unsupported_version);
}

TEST(ScoreSeries, ValidateCatchesBrokenInvariants) {
  auto s = make_series({0.1, 0.2, 0.3});
  s.normalized[1] = 1.5;
  EXPECT_EQ(code_of([&] { s.validate(); }), Errc::invalid_argument);
  s = make_series({0.1, 0.2, 0.3});
  s.timestamps[2] = s.timestamps[1];
  EXPECT_EQ(code_of([&] { s.validate(); }), Errc::invalid_argument);
  s = make_series({0.1, 0.2, 0.3});
  s.raw.pop_back();
  EXPECT_EQ(code_of([&] { s.validate(); }), Errc::invalid_argument);
}

TEST(ScoreSeries, EndTimeFallsBackToLastSample) {
  auto s = make_series({0.1, 0.2, 0.3}, 2.0);
  EXPECT_DOUBLE_EQ(s.end_time(), 1.5);
  s.duration = 0.0;
  EXPECT_DOUBLE_EQ(s.end_time(), 1.5);
}

TEST(FrameEmbeddingSeries, EnforcesInvariants) {
  FrameEmbeddingSeries s({"h", 1.0, "fp", 3.0}, 2);
  s.append(0.0, EmbeddingVector::normalized({1, 0}));
  EXPECT_EQ(code_of([&] { s.append(0.0, EmbeddingVector::normalized({0, 1})); }), Errc::invalid_argument);
  EXPECT_EQ(code_of([&] { s.append(1.0, EmbeddingVector::normalized({0, 1, 0})); }), Errc::dimension_mismatch);
  EXPECT_EQ(code_of([] { FrameEmbeddingSeries({"h", 0.0, "fp", 0.0}, 2); }), Errc::invalid_argument);
  EXPECT_EQ(code_of([] { FrameEmbeddingSeries::from_parts({"h", 1.0, "fp", 0.0}, 2, {0.0}, {1.0f, 1.0f}); }),
            Errc::invalid_argument);
  const auto rebuilt = FrameEmbeddingSeries::from_parts(s.meta(), 2, {0.0}, {1.0f, 0.0f});
  EXPECT_EQ(rebuilt, s);
}
