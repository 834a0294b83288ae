#pragma once

// Test-only reference for random walk with restart: dense power iteration on
// pi = alpha * e_q + (1 - alpha) * P^T pi, with P row-normalised edge weights.
// Rows of isolated nodes are zero (their mass is dropped), matching a walk that
// cannot leave an isolated keyword.

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

namespace radar::testing
{
using DenseWeights = std::vector<std::vector<double>>;

inline std::vector<double> power_iteration_rwr(const DenseWeights& w, std::size_t q, double alpha,
                                               double tol = 1e-12)
{
  const std::size_t n = w.size();
  std::vector<double> strength(n, 0.0);
  for (std::size_t u = 0; u < n; ++u)
  {
    for (std::size_t v = 0; v < n; ++v)
    {
      strength[u] += w[u][v];
    }
  }
  std::vector<double> pi(n, 0.0);
  pi[q] = 1.0;
  for (int iter = 0; iter < 100000; ++iter)
  {
    std::vector<double> next(n, 0.0);
    next[q] = alpha;
    for (std::size_t u = 0; u < n; ++u)
    {
      if (strength[u] == 0.0 || pi[u] == 0.0)
      {
        continue;
      }
      for (std::size_t v = 0; v < n; ++v)
      {
        if (w[u][v] != 0.0)
        {
          next[v] += (1.0 - alpha) * (w[u][v] / strength[u]) * pi[u];
        }
      }
    }
    double diff = 0.0;
    for (std::size_t i = 0; i < n; ++i)
    {
      diff = std::max(diff, std::abs(next[i] - pi[i]));
    }
    pi = std::move(next);
    if (diff < tol)
    {
      break;
    }
  }
  return pi;
}

/// Random symmetric integer-weighted graph on n nodes with edge probability p.
inline DenseWeights random_weights(std::size_t n, double p, std::mt19937_64& rng)
{
  DenseWeights w(n, std::vector<double>(n, 0.0));
  std::bernoulli_distribution coin(p);
  std::uniform_int_distribution<int> weight(1, 9);
  for (std::size_t u = 0; u < n; ++u)
  {
    for (std::size_t v = u + 1; v < n; ++v)
    {
      if (coin(rng))
      {
        w[u][v] = w[v][u] = weight(rng);
      }
    }
  }
  return w;
}

}  // namespace radar::testing
