#pragma once

#include <algorithm>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "radar/ingest.hpp"
#include "radar/keyword_graph.hpp"

namespace radar::testing
{
inline TweetPtr tweet(const std::string& id, Timestamp ts, double lat, double lon,
                      std::vector<std::string> keywords, const std::string& user = "")
{
  auto t = std::make_shared<Tweet>();
  t->id = id;
  t->user_id = user.empty() ? "u-" + id : user;
  t->timestamp = ts;
  t->location = {lat, lon};
  std::sort(keywords.begin(), keywords.end());
  t->keywords = std::move(keywords);
  return t;
}

/// Index that has observed `tweets` and holds vicinities for all their keywords.
inline SemanticIndex index_over(const std::vector<TweetPtr>& tweets, RwrParams params = {})
{
  SemanticIndex index(params);
  std::vector<KeywordId> used;
  for (const auto& t : tweets)
  {
    auto ids = index.observe(t->keywords);
    used.insert(used.end(), ids.begin(), ids.end());
  }
  index.sync(used);
  return index;
}

/// Tweets scattered in a box of `span_deg` around (41.88, -87.63) using a
/// small shared vocabulary.
inline std::vector<TweetPtr> random_window(std::size_t n, double span_deg, std::mt19937_64& rng,
                                           std::size_t vocab = 8)
{
  std::uniform_real_distribution<double> off(-span_deg / 2, span_deg / 2);
  std::vector<TweetPtr> out;
  for (std::size_t i = 0; i < n; ++i)
  {
    std::vector<std::string> kws;
    const std::size_t k = 1 + rng() % 4;
    for (std::size_t j = 0; j < k; ++j)
    {
      kws.push_back("w" + std::to_string(rng() % vocab));
    }
    char id[16];
    std::snprintf(id, sizeof(id), "t%04zu", i);
    out.push_back(tweet(id, static_cast<Timestamp>(rng() % 3600), 41.88 + off(rng),
                        -87.63 + off(rng), kws));
  }
  return out;
}

}  // namespace radar::testing
