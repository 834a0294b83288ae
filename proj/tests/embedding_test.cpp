#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "radar/embedding.hpp"

using namespace radar;

namespace
{
using Batch = std::vector<std::vector<std::string>>;

/// Tweets drawn from two disjoint keyword communities, a* and b*.
Batch community_batch(std::size_t n, std::mt19937_64& rng)
{
  Batch out;
  for (std::size_t i = 0; i < n; ++i)
  {
    const char prefix = (rng() % 2) ? 'a' : 'b';
    std::vector<std::string> t;
    for (int k = 0; k < 3; ++k)
    {
      t.push_back(std::string(1, prefix) + std::to_string(rng() % 5));
    }
    out.push_back(t);
  }
  return out;
}

EmbeddingParams small_params()
{
  EmbeddingParams p;
  p.dimension = 16;
  p.learning_rate = 0.05;
  p.decay_steps = 100'000;
  return p;
}
}  // namespace

TEST(WeightTree, FindMatchesLinearScan)
{
  std::mt19937_64 rng(2);
  detail::WeightTree tree;
  std::vector<int64_t> w;
  for (int i = 0; i < 300; ++i)
  {
    if (w.empty() || rng() % 3 != 0)
    {
      w.push_back(static_cast<int64_t>(1 + rng() % 50));
      tree.push_back(w.back());
    }
    else
    {
      const std::size_t at = rng() % w.size();
      w[at] = static_cast<int64_t>(1 + rng() % 50);
      tree.set(at, w[at]);
    }
    int64_t total = 0;
    for (auto x : w)
    {
      total += x;
    }
    ASSERT_EQ(tree.total(), total);
    for (int q = 0; q < 20; ++q)
    {
      const int64_t target = static_cast<int64_t>(rng() % static_cast<uint64_t>(total));
      std::size_t expected = 0;
      int64_t prefix = w[0];
      while (prefix <= target)
      {
        prefix += w[++expected];
      }
      ASSERT_EQ(tree.find(target), expected);
    }
  }
}

TEST(Embedding, ZeroLearningRateKeepsInitialVectors)
{
  auto p = small_params();
  p.learning_rate = 0.0;
  EmbeddingModel m(p);
  std::mt19937_64 rng(1);
  const auto batch = community_batch(50, rng);
  m.train(batch);
  for (const auto& t : batch)
  {
    for (const auto& k : t)
    {
      EXPECT_EQ(m.vector_of(k), m.initial_vector(k));
    }
  }
}

TEST(Embedding, InitialVectorsAreSeededAndBounded)
{
  EmbeddingModel m(small_params());
  const auto v = m.initial_vector("lake");
  EXPECT_EQ(v, EmbeddingModel(small_params()).initial_vector("lake"));
  EXPECT_NE(v, m.initial_vector("pier"));
  for (double x : v)
  {
    EXPECT_LE(std::abs(x), 0.5 / 16);
  }
}

TEST(Embedding, CommunitiesSeparate)
{
  EmbeddingModel m(small_params());
  std::mt19937_64 rng(7);
  for (int step = 0; step < 200; ++step)
  {
    m.train(community_batch(20, rng));
  }
  double intra = 0, inter = 0;
  int ni = 0, nx = 0;
  for (char p : {'a', 'b'})
  {
    for (int i = 0; i < 5; ++i)
    {
      for (char q : {'a', 'b'})
      {
        for (int j = 0; j < 5; ++j)
        {
          if (p == q && i == j)
          {
            continue;
          }
          const auto u = m.vector_of(std::string(1, p) + std::to_string(i));
          const auto v = m.vector_of(std::string(1, q) + std::to_string(j));
          (p == q ? intra : inter) += cosine(u, v);
          ++(p == q ? ni : nx);
        }
      }
    }
  }
  intra /= ni;
  inter /= nx;
  EXPECT_GT(intra, inter + 0.2) << intra << " vs " << inter;
}

TEST(Embedding, ObjectiveNonIncreasingOnRepeatedBatch)
{
  auto p = small_params();
  p.learning_rate = 0.01;
  EmbeddingModel m(p);
  std::mt19937_64 rng(5);
  const auto batch = community_batch(30, rng);
  m.train(batch);
  double previous = m.objective(batch);
  for (int i = 0; i < 10; ++i)
  {
    m.train(batch);
    const double now = m.objective(batch);
    EXPECT_LE(now, previous) << "evaluation " << i;
    previous = now;
  }
}

TEST(Embedding, DeterministicUnderSeed)
{
  std::mt19937_64 r1(9), r2(9);
  EmbeddingModel a(small_params()), b(small_params());
  for (int step = 0; step < 30; ++step)
  {
    a.train(community_batch(10, r1));
    b.train(community_batch(10, r2));
  }
  EXPECT_EQ(a, b);
}

TEST(Embedding, StaysFiniteUnderLargeRate)
{
  auto p = small_params();
  p.learning_rate = 50.0;
  p.clip_norm = 1.0;
  EmbeddingModel m(p);
  std::mt19937_64 rng(3);
  for (int step = 0; step < 100; ++step)
  {
    m.train(community_batch(10, rng));
  }
  for (char c : {'a', 'b'})
  {
    for (int i = 0; i < 5; ++i)
    {
      for (double x : m.vector_of(std::string(1, c) + std::to_string(i)))
      {
        ASSERT_TRUE(std::isfinite(x));
      }
    }
  }
}

TEST(Embedding, EmbedTextMeans)
{
  EmbeddingModel m(small_params());
  m.train(Batch{{"lake", "pier"}});
  const auto lake = m.vector_of("lake");
  const auto pier = m.vector_of("pier");
  EXPECT_EQ(m.embed_text(std::vector<std::string>{"lake"}).vector, lake);
  EXPECT_EQ(m.embed_text(std::vector<std::string>{"lake", "lake"}).vector, lake);
  const auto both = m.embed_text(std::vector<std::string>{"pier", "lake", "ghost"});
  EXPECT_EQ(both.known, 2u);
  EXPECT_EQ(both.unknown, 1u);
  for (std::size_t j = 0; j < lake.size(); ++j)
  {
    EXPECT_DOUBLE_EQ(both.vector[j], (lake[j] + pier[j]) / 2);
  }
  EXPECT_EQ(m.embed_text(std::vector<std::string>{"lake", "pier", "lake"}).vector,
            m.embed_text(std::vector<std::string>{"pier", "lake", "lake"}).vector);
  EXPECT_THROW(m.embed_text(std::vector<std::string>{"ghost"}), UnknownTextError);
  EXPECT_THROW(m.embed_text(std::vector<std::string>{}), UnknownTextError);
}

TEST(Embedding, ReplayDrawsFromCache)
{
  auto p = small_params();
  p.cache_size = 5;
  EmbeddingModel m(p);
  std::mt19937_64 rng(1);
  m.train(community_batch(20, rng));
  EXPECT_EQ(m.cached_tweets(), 5u);
  EXPECT_EQ(m.steps(), 20u);  // empty cache, so no replay on the first batch
  m.train(community_batch(20, rng));
  EXPECT_EQ(m.steps(), 20u + 20u + 4u);  // 0.1 * 40 accumulated credit
}

TEST(Embedding, PersistenceRoundTripAndContinuation)
{
  EmbeddingModel m(small_params());
  std::mt19937_64 rng(4);
  for (int step = 0; step < 10; ++step)
  {
    m.train(community_batch(10, rng));
  }
  std::stringstream s;
  m.write(s);
  auto back = EmbeddingModel::read(s, small_params());
  EXPECT_EQ(back, m);
  const auto more = community_batch(10, rng);
  m.train(more);
  back.train(more);
  EXPECT_EQ(back, m);
}

TEST(Cosine, ZeroVectorGivesZero)
{
  const std::vector<double> z{0, 0}, a{1, 0}, b{1, 1};
  EXPECT_EQ(cosine(z, a), 0.0);
  EXPECT_NEAR(cosine(a, b), std::sqrt(0.5), 1e-15);
  EXPECT_THROW(cosine(a, std::vector<double>{1}), std::invalid_argument);
}
