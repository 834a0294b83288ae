#pragma once

// Test-only brute-force clustering: materialises every pairwise G and S value
// with a plain double loop (no spatial index), then follows local pivots one
// hop at a time.

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "radar/candidate_generator.hpp"

namespace radar::testing
{
struct OracleClustering
{
  std::vector<std::string> ids;  // sorted
  std::vector<std::vector<double>> g;  // g[from][to]
  std::vector<std::vector<double>> s;  // s[from][to]
  std::map<std::string, std::vector<std::string>> neighborhood;
  std::map<std::string, double> authority;
  std::map<std::string, std::string> local_pivot;
  std::map<std::string, std::string> pivot;
  std::map<std::string, std::size_t> hops;
};

inline OracleClustering brute_force_clustering(std::vector<TweetPtr> window,
                                               const SemanticIndex& semantics,
                                               const GeneratorParams& params)
{
  std::sort(window.begin(), window.end(),
            [](const TweetPtr& a, const TweetPtr& b) { return a->id < b->id; });
  const std::size_t n = window.size();
  OracleClustering o;
  std::vector<std::vector<KeywordId>> ids(n);
  for (std::size_t i = 0; i < n; ++i)
  {
    o.ids.push_back(window[i]->id);
    ids[i] = semantics.ids_of(window[i]->keywords);
  }
  o.g.assign(n, std::vector<double>(n));
  o.s.assign(n, std::vector<double>(n));
  for (std::size_t a = 0; a < n; ++a)
  {
    for (std::size_t b = 0; b < n; ++b)
    {
      o.g[a][b] = geographic_influence(*window[a], *window[b], params.bandwidth_m);
      o.s[a][b] = semantics.semantic_score(ids[a], ids[b]);
    }
  }
  std::vector<std::vector<std::size_t>> nb(n);
  std::vector<double> auth(n, 0.0);
  for (std::size_t d = 0; d < n; ++d)
  {
    for (std::size_t other = 0; other < n; ++other)
    {
      if (other == d || (o.g[other][d] > 0.0 && o.s[other][d] > params.delta))
      {
        nb[d].push_back(other);
        auth[d] += o.g[other][d] * o.s[other][d];
      }
    }
  }
  std::vector<std::size_t> lp(n);
  for (std::size_t d = 0; d < n; ++d)
  {
    std::size_t best = nb[d].front();
    for (std::size_t c : nb[d])
    {
      if (auth[c] > auth[best] || (auth[c] == auth[best] && c < best))
      {
        best = c;
      }
    }
    lp[d] = best;
  }
  for (std::size_t d = 0; d < n; ++d)
  {
    std::size_t cur = d;
    std::size_t steps = 0;
    while (lp[cur] != cur && steps <= n)
    {
      cur = lp[cur];
      ++steps;
    }
    const auto& id = o.ids[d];
    for (std::size_t m : nb[d])
    {
      o.neighborhood[id].push_back(o.ids[m]);
    }
    o.authority[id] = auth[d];
    o.local_pivot[id] = o.ids[lp[d]];
    o.pivot[id] = o.ids[cur];
    o.hops[id] = steps;
  }
  return o;
}

inline ClusteringView view_of(const OracleClustering& o)
{
  ClusteringView v;
  for (const auto& id : o.ids)
  {
    ClusteringView::Entry e;
    e.neighborhood = o.neighborhood.at(id);
    e.authority = o.authority.at(id);
    e.local_pivot = o.local_pivot.at(id);
    e.pivot = o.pivot.at(id);
    v.tweets.emplace(id, std::move(e));
  }
  return v;
}

}  // namespace radar::testing
