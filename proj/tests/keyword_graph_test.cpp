#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "radar/keyword_graph.hpp"
#include "support/rwr_oracle.hpp"

using namespace radar;
using radar::testing::DenseWeights;

namespace
{
KeywordGraph graph_from(const DenseWeights& w)
{
  KeywordGraph g;
  for (std::size_t i = 0; i < w.size(); ++i)
  {
    g.add_node("k" + std::to_string(i));
  }
  for (std::size_t u = 0; u < w.size(); ++u)
  {
    for (std::size_t v = u + 1; v < w.size(); ++v)
    {
      if (w[u][v] != 0.0)
      {
        g.add_weight(static_cast<KeywordId>(u), static_cast<KeywordId>(v),
                     static_cast<uint64_t>(w[u][v]));
      }
    }
  }
  return g;
}

std::vector<std::string> kw(std::initializer_list<const char*> words)
{
  std::vector<std::string> out(words.begin(), words.end());
  std::sort(out.begin(), out.end());
  return out;
}
}  // namespace

TEST(KeywordGraph, ObserveSinglePair)
{
  KeywordGraph g;
  g.observe(kw({"a", "b"}));
  const auto a = g.id_of("a");
  const auto b = g.id_of("b");
  EXPECT_EQ(g.weight(a, b), 1u);
  EXPECT_EQ(g.weight(b, a), 1u);
  EXPECT_EQ(g.strength(a), 1u);
  EXPECT_EQ(g.strength(b), 1u);
}

TEST(KeywordGraph, SingletonAddsIsolatedNode)
{
  KeywordGraph g;
  g.observe(kw({"a"}));
  EXPECT_EQ(g.size(), 1u);
  EXPECT_EQ(g.strength(g.id_of("a")), 0u);
  EXPECT_TRUE(g.neighbors(g.id_of("a")).empty());
}

TEST(KeywordGraph, RepeatedTweetsAccumulate)
{
  KeywordGraph g;
  for (int i = 0; i < 3; ++i)
  {
    g.observe(kw({"a", "b"}));
  }
  EXPECT_EQ(g.weight(g.id_of("a"), g.id_of("b")), 3u);
}

TEST(KeywordGraph, DuplicateKeywordsInOneTweetCountOnce)
{
  KeywordGraph g;
  g.observe(kw({"a", "a", "b"}));
  EXPECT_EQ(g.weight(g.id_of("a"), g.id_of("b")), 1u);
}

TEST(KeywordGraph, TransitionProbabilities)
{
  KeywordGraph g;
  const auto u = g.add_node("u");
  const auto v = g.add_node("v");
  const auto w = g.add_node("w");
  g.add_weight(u, v, 3);
  g.add_weight(u, w, 1);
  EXPECT_DOUBLE_EQ(*g.transition_probability(u, v), 0.75);

  KeywordGraph tri;
  tri.observe(kw({"a", "b"}));
  tri.observe(kw({"b", "c"}));
  tri.observe(kw({"a", "c"}));
  EXPECT_DOUBLE_EQ(*tri.transition_probability(tri.id_of("a"), tri.id_of("b")), 0.5);
  EXPECT_DOUBLE_EQ(*tri.transition_probability(tri.id_of("a"), tri.id_of("c")), 0.5);

  const auto iso = g.add_node("iso");
  EXPECT_FALSE(g.transition_probability(iso, u).has_value());
}

TEST(KeywordGraph, TransitionRowsSumToOne)
{
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial)
  {
    const auto g = graph_from(radar::testing::random_weights(2 + rng() % 30, 0.3, rng));
    for (KeywordId u = 0; u < g.size(); ++u)
    {
      if (g.strength(u) == 0)
      {
        continue;
      }
      double sum = 0.0;
      for (const auto& e : g.neighbors(u))
      {
        sum += *g.transition_probability(u, e.to);
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(KeywordGraph, ObserveIsOrderIndependent)
{
  std::mt19937_64 rng(8);
  const std::vector<std::string> vocab = {"lake", "pier", "jazz", "storm", "bus", "rain", "food"};
  std::vector<std::vector<std::string>> batch;
  for (int i = 0; i < 40; ++i)
  {
    std::vector<std::string> t;
    const int n = 1 + static_cast<int>(rng() % 4);
    for (int k = 0; k < n; ++k)
    {
      t.push_back(vocab[rng() % vocab.size()]);
    }
    std::sort(t.begin(), t.end());
    batch.push_back(t);
  }
  KeywordGraph reference;
  for (const auto& t : batch)
  {
    reference.observe(t);
  }
  for (int perm = 0; perm < 10; ++perm)
  {
    std::shuffle(batch.begin(), batch.end(), rng);
    KeywordGraph g;
    for (const auto& t : batch)
    {
      g.observe(t);
    }
    EXPECT_TRUE(g.same_structure(reference));
    for (const auto& n : g.canonical_nodes())
    {
      EXPECT_EQ(g.strength(g.id_of(n)), reference.strength(reference.id_of(n)));
    }
  }
}

TEST(KeywordGraph, PersistenceRoundTrip)
{
  std::mt19937_64 rng(4);
  const auto g = graph_from(radar::testing::random_weights(25, 0.2, rng));
  std::stringstream ss;
  g.write(ss);
  const auto back = KeywordGraph::read(ss);
  EXPECT_EQ(back, g);
  std::stringstream again;
  back.write(again);
  EXPECT_EQ(again.str(), ss.str());
}

TEST(ApproximateRwr, TwoNodeMatchesPowerIteration)
{
  const DenseWeights w = {{0, 1}, {1, 0}};
  const auto g = graph_from(w);
  const auto exact = radar::testing::power_iteration_rwr(w, 0, 0.5);
  EXPECT_NEAR(exact[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(exact[1], 1.0 / 3.0, 1e-12);
  const auto v = approximate_rwr(g, 0, 0.5, 1e-12);
  EXPECT_NEAR(v.score(0), 2.0 / 3.0, 1e-11);
  EXPECT_NEAR(v.score(1), 1.0 / 3.0, 1e-11);
}

TEST(ApproximateRwr, LargeEpsilonStopsImmediately)
{
  std::mt19937_64 rng(1);
  const auto g = graph_from(radar::testing::random_weights(10, 0.5, rng));
  const auto v = approximate_rwr(g, 3, 0.2, 1.5);
  ASSERT_EQ(v.scores.size(), 1u);
  EXPECT_EQ(v.scores[0].first, 3u);
  EXPECT_DOUBLE_EQ(v.scores[0].second, 0.2);
}

TEST(ApproximateRwr, StarWithinEpsilon)
{
  const DenseWeights w = {{0, 1, 1}, {1, 0, 0}, {1, 0, 0}};
  const auto g = graph_from(w);
  const auto exact = radar::testing::power_iteration_rwr(w, 0, 0.2);
  const auto v = approximate_rwr(g, 0, 0.2, 1e-4);
  for (KeywordId i = 0; i < 3; ++i)
  {
    EXPECT_NEAR(v.score(i), exact[i], 1e-4);
    EXPECT_LE(v.score(i), exact[i] + 1e-15);
  }
}

TEST(ApproximateRwr, VicinityInvariants)
{
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial)
  {
    const auto g = graph_from(radar::testing::random_weights(2 + rng() % 40, 0.2, rng));
    const KeywordId q = static_cast<KeywordId>(rng() % g.size());
    const auto v = approximate_rwr(g, q, 0.2, 1e-3);
    double total = 0.0;
    for (const auto& [k, s] : v.scores)
    {
      EXPECT_GT(s, 0.0);
      total += s;
    }
    EXPECT_LE(total, 1.0 + 1e-12);
    EXPECT_GE(v.score(q), 0.2);
  }
}

TEST(ApproximateRwr, ErrorBoundAndUnderestimateOnRandomGraphs)
{
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial)
  {
    const std::size_t n = 2 + rng() % 49;
    const double p = std::uniform_real_distribution<double>(0.03, 0.9)(rng);
    const auto w = radar::testing::random_weights(n, p, rng);
    const auto g = graph_from(w);
    const KeywordId q = static_cast<KeywordId>(rng() % n);
    const auto exact = radar::testing::power_iteration_rwr(w, q, 0.2);
    for (double eps : {1e-3, 1e-4})
    {
      const auto v = approximate_rwr(g, q, 0.2, eps);
      for (KeywordId i = 0; i < n; ++i)
      {
        EXPECT_LE(exact[i] - v.score(i), eps);
        EXPECT_LE(v.score(i), exact[i] + 1e-12);
      }
    }
  }
}

TEST(ApproximateRwr, HubStarStaysWithinEpsilon)
{
  DenseWeights w(50, std::vector<double>(50, 0.0));
  for (std::size_t leaf = 1; leaf < 50; ++leaf)
  {
    w[0][leaf] = w[leaf][0] = 1;
  }
  const auto g = graph_from(w);
  for (KeywordId q : {0u, 7u})
  {
    const auto exact = radar::testing::power_iteration_rwr(w, q, 0.2);
    const auto v = approximate_rwr(g, q, 0.2, 1e-3);
    for (KeywordId i = 0; i < 50; ++i)
    {
      EXPECT_LE(exact[i] - v.score(i), 1e-3);
    }
  }
}

TEST(ApproximateRwr, ShrinkingEpsilonNeverDecreasesScores)
{
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 40; ++trial)
  {
    const auto g = graph_from(radar::testing::random_weights(2 + rng() % 40, 0.25, rng));
    const KeywordId q = static_cast<KeywordId>(rng() % g.size());
    const auto coarse = approximate_rwr(g, q, 0.2, 1e-2);
    const auto fine = approximate_rwr(g, q, 0.2, 1e-4);
    for (const auto& [k, s] : coarse.scores)
    {
      EXPECT_GE(fine.score(k), s);
    }
  }
}

TEST(ApproximateRwr, RejectsBadInput)
{
  KeywordGraph g;
  g.add_node("a");
  EXPECT_THROW(approximate_rwr(g, 5, 0.2, 1e-4), std::out_of_range);
  EXPECT_THROW(approximate_rwr(g, 0, 1.0, 1e-4), std::invalid_argument);
  EXPECT_THROW(approximate_rwr(g, 0, 0.2, 0.0), std::invalid_argument);
}

TEST(SemanticIndex, SelfScoreAtLeastAlpha)
{
  SemanticIndex index;
  index.observe(kw({"k", "other"}));
  const auto ids = index.ids_of(kw({"k"}));
  index.sync(ids);
  EXPECT_GE(index.semantic_score(ids, ids), 0.2);
}

TEST(SemanticIndex, DisconnectedComponentsScoreZero)
{
  SemanticIndex index;
  index.observe(kw({"a", "b"}));
  index.observe(kw({"c", "d"}));
  const auto from = index.ids_of(kw({"a", "b"}));
  const auto to = index.ids_of(kw({"c", "d"}));
  std::vector<KeywordId> all = from;
  all.insert(all.end(), to.begin(), to.end());
  index.sync(all);
  EXPECT_EQ(index.semantic_score(from, to), 0.0);
  EXPECT_GT(index.semantic_score(from, from), 0.0);
}

TEST(SemanticIndex, MatchesPairwiseOracle)
{
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial)
  {
    const auto w = radar::testing::random_weights(10, 0.35, rng);
    SemanticIndex index;
    for (std::size_t i = 0; i < 10; ++i)
    {
      index.mutable_graph().add_node("k" + std::to_string(i));
    }
    for (std::size_t u = 0; u < 10; ++u)
    {
      for (std::size_t v = u + 1; v < 10; ++v)
      {
        if (w[u][v] != 0.0)
        {
          index.mutable_graph().add_weight(static_cast<KeywordId>(u), static_cast<KeywordId>(v),
                                           static_cast<uint64_t>(w[u][v]));
        }
      }
    }
    std::vector<KeywordId> all(10);
    for (KeywordId i = 0; i < 10; ++i)
    {
      all[i] = i;
    }
    index.sync(all);
    const std::vector<KeywordId> from = {static_cast<KeywordId>(rng() % 10),
                                         static_cast<KeywordId>(rng() % 10)};
    const std::vector<KeywordId> to = {static_cast<KeywordId>(rng() % 10),
                                       static_cast<KeywordId>(rng() % 10)};
    double oracle = 0.0;
    for (KeywordId u : from)
    {
      const auto exact = radar::testing::power_iteration_rwr(w, u, 0.2);
      for (KeywordId v : to)
      {
        oracle += exact[v];
      }
    }
    oracle /= 4.0;
    // Each of the four terms underestimates its exact RWR value by at most epsilon.
    const double s = index.semantic_score(from, to);
    EXPECT_LE(s, oracle + 1e-12);
    EXPECT_GE(s, oracle - 1e-4);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(SemanticIndex, EmptyKeywordSetRejected)
{
  SemanticIndex index;
  index.observe(kw({"a", "b"}));
  const auto ids = index.ids_of(kw({"a"}));
  index.sync(ids);
  EXPECT_THROW(index.semantic_score({}, ids), std::invalid_argument);
}

TEST(SemanticIndex, DriftInvalidatesOnlyPastTolerance)
{
  SemanticIndex index(RwrParams{0.2, 1e-4, 0.10});
  for (int i = 0; i < 20; ++i)
  {
    index.observe(kw({"a", "b"}));
  }
  index.observe(kw({"c", "d"}));
  const auto ids = index.ids_of(kw({"a", "b", "c", "d"}));
  EXPECT_EQ(index.sync(ids).size(), 4u);
  EXPECT_TRUE(index.sync(ids).empty());

  index.observe(kw({"a", "b"}));  // +5% for a and b
  EXPECT_TRUE(index.sync(ids).empty());
  index.observe(kw({"a", "b"}));
  index.observe(kw({"a", "b"}));  // +15% since cached
  const auto refreshed = index.sync(ids);
  EXPECT_EQ(refreshed, index.ids_of(kw({"a", "b"})));

  index.observe(kw({"c", "e"}));  // c doubles, and is not in use
  const auto keep = index.ids_of(kw({"a", "b"}));
  EXPECT_TRUE(index.sync(keep).empty());
  EXPECT_FALSE(index.has_vicinity(index.graph().id_of("c")));
  EXPECT_TRUE(index.has_vicinity(index.graph().id_of("d")));
}

TEST(SemanticIndex, CachePersistenceRoundTrip)
{
  SemanticIndex index;
  index.observe(kw({"a", "b", "c"}));
  index.observe(kw({"c", "d"}));
  index.sync(index.ids_of(kw({"a", "b", "c", "d"})));
  index.observe(kw({"a", "d"}));

  std::stringstream graph_text;
  std::stringstream cache_text;
  index.graph().write(graph_text);
  index.write_cache(cache_text);

  SemanticIndex back(index.params());
  back.mutable_graph() = KeywordGraph::read(graph_text);
  back.read_cache(cache_text);
  EXPECT_EQ(back, index);
}
