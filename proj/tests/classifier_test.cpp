#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "radar/classifier.hpp"
#include "support/fixtures.hpp"
#include "support/separable.hpp"

using namespace radar;
using radar::testing::separable_set;
using radar::testing::tweet;

namespace
{
/// Model whose vectors are exactly the seeded initial vectors of `words`.
EmbeddingModel frozen_model(const std::vector<std::string>& words)
{
  EmbeddingParams p;
  p.dimension = 8;
  p.learning_rate = 0.0;
  EmbeddingModel m(p);
  m.train(std::vector<std::vector<std::string>>{words});
  return m;
}

double ref_cos(const std::vector<double>& a, const std::vector<double>& b)
{
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
  {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

std::vector<double> mix(const EmbeddingModel& m, const std::vector<std::pair<std::string, double>>& w)
{
  std::vector<double> out(m.dimension(), 0.0);
  double total = 0;
  for (const auto& [k, x] : w)
  {
    const auto v = m.vector_of(k);
    for (std::size_t j = 0; j < v.size(); ++j)
    {
      out[j] += x * v[j];
    }
    total += x;
  }
  for (auto& x : out)
  {
    x /= total;
  }
  return out;
}

CandidateEvent candidate_of(std::vector<TweetPtr> members)
{
  CandidateEvent c;
  c.pivot = members.front();
  c.members = std::move(members);
  return c;
}

double reference_probability(const LogisticModel& m, const std::vector<double>& x)
{
  double z = m.bias();
  for (std::size_t j = 0; j < x.size(); ++j)
  {
    z += m.weights()[j] * (x[j] - m.mean()[j]) / m.scale()[j];
  }
  return 1.0 / (1.0 + std::exp(-z));
}
}  // namespace

TEST(Features, HandBuiltCandidate)
{
  const auto m = frozen_model({"lake", "pier", "storm", "jazz"});
  FeatureParams fp;
  fp.estimation_bandwidth_m = 1000;
  fp.burst_bandwidth_m = 1000;

  const auto a = tweet("a", 100, 41.880, -87.630, {"storm", "lake"}, "u1");
  const auto b = tweet("b", 160, 41.881, -87.630, {"storm"}, "u2");
  const auto c = tweet("c", 400, 41.880, -87.631, {"storm", "pier"}, "u1");
  const auto far = tweet("f", 200, 41.95, -87.63, {"storm", "jazz"}, "u9");
  const std::vector<TweetPtr> window = {a, b, c, far};
  const auto ctx = make_window_context(window, m, fp);
  const auto cand = candidate_of({a, b, c});

  TimelineSnapshot hist;
  auto tc = TweetCluster::of(*tweet("h", 0, 41.8805, -87.630, {}), 1);
  tc.me = {{"lake", 6}, {"jazz", 2}};
  hist.clusters.push_back(tc);

  const auto f = extract_features(cand, hist, m, ctx, fp);

  const std::vector<std::pair<std::string, double>> cand_w = {{"lake", 1}, {"pier", 1}, {"storm", 3}};
  const auto e_cand = mix(m, cand_w);
  const double g = std::max(0.0, 1 - std::pow(haversine_m(a->location, tc.center()) / 1000, 2));
  const auto e_hist = mix(m, {{"jazz", 2 * g}, {"lake", 6 * g}});
  const auto e_window = mix(m, {{"jazz", 1}, {"lake", 1}, {"pier", 1}, {"storm", 4}});

  EXPECT_NEAR(f.temporal_unusualness(), 1 - ref_cos(e_cand, e_hist), 1e-12);
  EXPECT_NEAR(f.spatial_unusualness(), 1 - ref_cos(e_cand, e_window), 1e-12);
  EXPECT_NEAR(f.temporal_burstiness(), 5.0 / (1.0 + 6 * g), 1e-12);
  // Near the pivot: storm x3, lake, pier; whole window: storm x4, lake, pier.
  EXPECT_NEAR(f.spatial_burstiness(), 5.0 / (1.0 + 6.0), 1e-12);
  EXPECT_EQ(f.tweet_count(), 3.0);
  EXPECT_EQ(f.distinct_users(), 2.0);
  EXPECT_EQ(f.time_span_s(), 300.0);
  EXPECT_GT(f.spatial_deviation_m(), 0.0);
  EXPECT_LT(f.spatial_deviation_m(), 150.0);
}

TEST(Features, MatchingHistoryHasZeroTemporalUnusualness)
{
  const auto m = frozen_model({"lake", "pier"});
  const auto a = tweet("a", 0, 41.88, -87.63, {"lake", "pier"});
  const auto b = tweet("b", 0, 41.88, -87.63, {"lake", "lake", "pier", "pier"});
  const std::vector<TweetPtr> window = {a, b};
  const auto ctx = make_window_context(window, m, {});
  TimelineSnapshot hist;
  auto tc = TweetCluster::of(*a, 1);
  tc.me = {{"lake", 30}, {"pier", 30}};
  hist.clusters.push_back(tc);
  const auto f = extract_features(candidate_of({a, b}), hist, m, ctx, {});
  EXPECT_NEAR(f.temporal_unusualness(), 0.0, 1e-12);
  EXPECT_NEAR(f.spatial_unusualness(), 0.0, 1e-12);
}

TEST(Features, EmptyHistoryCountsAsUnusual)
{
  const auto m = frozen_model({"lake", "pier"});
  const auto a = tweet("a", 0, 41.88, -87.63, {"lake"});
  const std::vector<TweetPtr> window = {a};
  const auto ctx = make_window_context(window, m, {});
  const auto f = extract_features(candidate_of({a}), TimelineSnapshot{}, m, ctx, {});
  EXPECT_DOUBLE_EQ(f.temporal_unusualness(), 1.0);
  EXPECT_DOUBLE_EQ(f.temporal_burstiness(), 1.0);
}

TEST(Features, OrthogonalWindowGivesUnitSpatialUnusualness)
{
  // Two keywords whose vectors are orthogonal by construction.
  const auto m = frozen_model({"lake", "pier"});
  const auto lake = m.vector_of("lake");
  const auto pier = m.vector_of("pier");
  double ll = 0, lp = 0;
  for (std::size_t j = 0; j < lake.size(); ++j)
  {
    ll += lake[j] * lake[j];
    lp += lake[j] * pier[j];
  }
  // Window embedding is weighted so that it is orthogonal to lake:
  // w_l * lake + w_p * pier with w_l * ll + w_p * lp = 0.
  WindowContext ctx;
  ctx.embedding = std::vector<double>(lake.size());
  for (std::size_t j = 0; j < lake.size(); ++j)
  {
    (*ctx.embedding)[j] = -lp * lake[j] + ll * pier[j];
  }
  const auto a = tweet("a", 0, 41.88, -87.63, {"lake"});
  ctx.tweets = {a};
  const auto f = extract_features(candidate_of({a}), TimelineSnapshot{}, m, ctx, {});
  EXPECT_NEAR(f.spatial_unusualness(), 1.0, 1e-12);
}

TEST(Features, PureFunction)
{
  std::mt19937_64 rng(3);
  const auto window = radar::testing::random_window(40, 0.05, rng);
  EmbeddingParams p;
  p.dimension = 8;
  EmbeddingModel m(p);
  std::vector<std::vector<std::string>> texts;
  for (const auto& t : window)
  {
    texts.push_back(t->keywords);
  }
  m.train(texts);
  const auto ctx = make_window_context(window, m, {});
  TimelineSnapshot hist;
  hist.clusters.push_back(TweetCluster::of(*window[3], 1));
  const auto cand = candidate_of({window[0], window[1], window[2]});
  EXPECT_EQ(extract_features(cand, hist, m, ctx, {}), extract_features(cand, hist, m, ctx, {}));
}

TEST(LossGradient, MatchesCentralDifferences)
{
  std::mt19937_64 rng(17);
  std::normal_distribution<double> noise(0.0, 1.0);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial)
  {
    const auto set = separable_set(30, rng, 5);
    std::vector<std::vector<double>> x;
    std::vector<double> y;
    for (const auto& inst : set)
    {
      x.push_back(inst.features);
      y.push_back(inst.label ? 1.0 : 0.0);
    }
    std::vector<double> theta(6);
    for (auto& t : theta)
    {
      t = noise(rng);
    }
    const auto [loss, grad] = loss_and_gradient(theta, x, y, 0.1);
    for (std::size_t j = 0; j < theta.size(); ++j)
    {
      const double h = 1e-6;
      auto up = theta, down = theta;
      up[j] += h;
      down[j] -= h;
      const double fd = (loss_and_gradient(up, x, y, 0.1).first -
                         loss_and_gradient(down, x, y, 0.1).first) /
                        (2 * h);
      const double rel = std::abs(fd - grad[j]) / std::max({std::abs(fd), std::abs(grad[j]), 1e-8});
      worst = std::max(worst, rel);
    }
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(Train, TwoSeparablePoints)
{
  const std::vector<LabeledInstance> set = {{{-1.0, 0.0}, false}, {{1.0, 0.0}, true}};
  const auto m = train_classifier(set);
  EXPECT_FALSE(m.classify(set[0].features).is_event);
  EXPECT_TRUE(m.classify(set[1].features).is_event);
}

TEST(Train, ZeroEpochsGiveHalf)
{
  std::mt19937_64 rng(1);
  const auto set = separable_set(20, rng);
  TrainParams p;
  p.epochs = 0;
  const auto m = train_classifier(set, p);
  for (double w : m.weights())
  {
    EXPECT_EQ(w, 0.0);
  }
  EXPECT_EQ(m.probability(set[0].features), 0.5);
  EXPECT_TRUE(m.classify(set[0].features).is_event);
}

TEST(Train, AccurateOnSeparableSet)
{
  std::mt19937_64 rng(23);
  const auto set = separable_set(200, rng, kFeatureCount);
  const auto m = train_classifier(set);
  std::size_t correct = 0;
  for (const auto& inst : set)
  {
    correct += m.classify(inst.features).is_event == inst.label ? 1 : 0;
  }
  EXPECT_GE(static_cast<double>(correct) / 200.0, 0.95);
  EXPECT_EQ(train_classifier(set), m);
}

TEST(Train, RejectsSingleClass)
{
  std::vector<LabeledInstance> set = {{{1.0}, true}, {{2.0}, true}};
  EXPECT_THROW(train_classifier(set), std::invalid_argument);
  EXPECT_THROW(train_classifier(std::vector<LabeledInstance>{}), std::invalid_argument);
  set.push_back({{1.0, 2.0}, false});
  EXPECT_THROW(train_classifier(set), std::invalid_argument);
}

TEST(Classify, ZeroWeightsAndLimits)
{
  LogisticModel m(2);
  EXPECT_EQ(m.probability(std::vector<double>{3.0, -4.0}), 0.5);
  m.set_parameters({1.0, 0.0}, 0.0);
  EXPECT_GT(m.probability(std::vector<double>{1e6, 0.0}), 1.0 - 1e-12);
  EXPECT_LT(m.probability(std::vector<double>{-1e6, 0.0}), 1e-12);
  EXPECT_THROW(m.classify(std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Classify, MatchesReferenceSigmoidOnHeldOut)
{
  std::mt19937_64 rng(31);
  const auto train = separable_set(100, rng, 6);
  const auto held = separable_set(100, rng, 6);
  const auto m = train_classifier(train);
  for (const auto& inst : held)
  {
    EXPECT_NEAR(m.probability(inst.features), reference_probability(m, inst.features), 1e-12);
  }
}

TEST(Classify, MonotoneInPositiveWeightsAndThresholdExact)
{
  std::mt19937_64 rng(2);
  std::normal_distribution<double> noise(0.0, 1.0);
  LogisticModel m(3);
  m.set_parameters({0.7, -1.2, 0.1}, 0.3);
  m.set_threshold(0.6);
  for (int i = 0; i < 500; ++i)
  {
    std::vector<double> x = {noise(rng), noise(rng), noise(rng)};
    const auto d = m.classify(x);
    EXPECT_EQ(d.is_event, d.probability >= 0.6);
    auto bumped = x;
    bumped[0] += std::abs(noise(rng));
    EXPECT_GE(m.probability(bumped), d.probability);
  }
}

TEST(Classify, PersistenceRoundTrip)
{
  std::mt19937_64 rng(4);
  const auto m = train_classifier(separable_set(50, rng));
  std::stringstream s;
  m.write(s);
  EXPECT_EQ(LogisticModel::read(s), m);
}

TEST(Instances, FileRoundTripAndErrors)
{
  std::mt19937_64 rng(6);
  const auto set = separable_set(10, rng);
  std::stringstream s;
  s << "# label,features\n";
  write_instances(s, set);
  const auto back = read_instances(s);
  ASSERT_EQ(back.size(), set.size());
  for (std::size_t i = 0; i < set.size(); ++i)
  {
    EXPECT_EQ(back[i].features, set[i].features);
    EXPECT_EQ(back[i].label, set[i].label);
  }
  std::stringstream bad1("2,1.0\n");
  EXPECT_THROW(read_instances(bad1), std::invalid_argument);
  std::stringstream bad2("1,1.0\n0,1.0,2.0\n");
  EXPECT_THROW(read_instances(bad2), std::invalid_argument);
  std::stringstream bad3("1,abc\n");
  EXPECT_THROW(read_instances(bad3), std::invalid_argument);
}
