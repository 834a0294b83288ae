#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "radar/geo.hpp"
#include "radar/ingest.hpp"
#include "radar/keyword_graph.hpp"

namespace radar
{
struct GeneratorParams
{
  double bandwidth_m = 2000.0;
  double delta = 0.02;
  std::size_t min_support = 3;
};

/// A tweet together with its keyword ids resolved against the semantic index.
struct ResolvedTweet
{
  TweetPtr tweet;
  std::vector<KeywordId> keyword_ids;
};

inline ResolvedTweet resolve(const TweetPtr& t, const SemanticIndex& semantics)
{
  return ResolvedTweet{t, semantics.ids_of(t->keywords)};
}

/// G(from -> to): Epanechnikov kernel of the great-circle distance.
inline double geographic_influence(const Tweet& from, const Tweet& to, double bandwidth_m)
{
  return epanechnikov(haversine_m(from.location, to.location), bandwidth_m);
}

/// Energy that `from` contributes to `to`, or nullopt when `from` is not in
/// N(to). A tweet always belongs to its own neighbourhood.
inline std::optional<double> neighbor_term(const ResolvedTweet& from, const ResolvedTweet& to,
                                           const SemanticIndex& semantics,
                                           const GeneratorParams& params)
{
  const double g = geographic_influence(*from.tweet, *to.tweet, params.bandwidth_m);
  const bool self = from.tweet->id == to.tweet->id;
  if (!self && !(g > 0.0))
  {
    return std::nullopt;
  }
  const double s = semantics.semantic_score(from.keyword_ids, to.keyword_ids);
  if (!self && !(s > params.delta))
  {
    return std::nullopt;
  }
  return g * s;
}

/// A(d) = sum of G(d' -> d) * S(d' -> d) over N(d); the caller supplies the
/// terms in tweet-id order so every path sums identically.
inline double authority_from_terms(std::span<const double> terms_in_id_order)
{
  double total = 0.0;
  for (double t : terms_in_id_order)
  {
    total += t;
  }
  return total;
}

/// True when (a_authority, a_id) ranks above (b_authority, b_id): larger
/// authority wins, ties go to the smaller id.
inline bool ranks_above(double a_authority, const std::string& a_id, double b_authority,
                        const std::string& b_id)
{
  if (a_authority != b_authority)
  {
    return a_authority > b_authority;
  }
  return a_id < b_id;
}

/// Per-tweet clustering state for one window. Tweets are indexed in id
/// order, so index order is the tie-break order.
struct AuthorityState
{
  std::vector<ResolvedTweet> tweets;
  std::vector<std::vector<std::size_t>> neighborhood;
  std::vector<std::vector<double>> terms;
  std::vector<double> authority;
  std::vector<std::size_t> local_pivot;
  std::vector<std::size_t> pivot;
  std::vector<std::size_t> hops;

  std::size_t size() const { return tweets.size(); }

  std::optional<std::size_t> index_of(const std::string& id) const
  {
    auto it = std::lower_bound(tweets.begin(), tweets.end(), id,
                               [](const ResolvedTweet& t, const std::string& x) {
                                 return t.tweet->id < x;
                               });
    if (it == tweets.end() || it->tweet->id != id)
    {
      return std::nullopt;
    }
    return static_cast<std::size_t>(it - tweets.begin());
  }
};

/// Resolves keyword ids and orders the window by tweet id.
inline std::vector<ResolvedTweet> resolve_window(std::span<const TweetPtr> window,
                                                 const SemanticIndex& semantics)
{
  std::vector<ResolvedTweet> out;
  out.reserve(window.size());
  for (const auto& t : window)
  {
    out.push_back(resolve(t, semantics));
  }
  std::sort(out.begin(), out.end(), [](const ResolvedTweet& a, const ResolvedTweet& b) {
    return a.tweet->id < b.tweet->id;
  });
  return out;
}

/// N(d) for tweet `d` of an id-ordered window, using a grid over that window.
inline void compute_neighborhood(const std::vector<ResolvedTweet>& tweets,
                                 const SpatialGrid<std::size_t>& grid, std::size_t d,
                                 const SemanticIndex& semantics, const GeneratorParams& params,
                                 std::vector<std::size_t>& members, std::vector<double>& terms)
{
  std::vector<std::pair<std::size_t, double>> found;
  grid.for_each_near(tweets[d].tweet->location, [&](std::size_t other) {
    if (auto term = neighbor_term(tweets[other], tweets[d], semantics, params))
    {
      found.emplace_back(other, *term);
    }
  });
  std::sort(found.begin(), found.end());
  members.clear();
  terms.clear();
  members.reserve(found.size());
  terms.reserve(found.size());
  for (const auto& [other, term] : found)
  {
    members.push_back(other);
    terms.push_back(term);
  }
}

/// l(d): the member of N(d) with the largest authority, smallest id on ties.
inline std::size_t local_pivot(const AuthorityState& state, std::size_t d)
{
  std::size_t best = d;
  for (std::size_t n : state.neighborhood[d])
  {
    if (ranks_above(state.authority[n], state.tweets[n].tweet->id, state.authority[best],
                    state.tweets[best].tweet->id))
    {
      best = n;
    }
  }
  return best;
}

/// Follows local pivots from every tweet to its fixed point. Each hop moves to
/// a strictly higher (authority, -id) rank, so paths are acyclic.
inline void authority_ascent(AuthorityState& state)
{
  const std::size_t n = state.size();
  constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
  state.pivot.assign(n, kUnset);
  state.hops.assign(n, 0);
  std::vector<std::size_t> path;
  for (std::size_t start = 0; start < n; ++start)
  {
    path.clear();
    std::size_t cur = start;
    while (state.pivot[cur] == kUnset && state.local_pivot[cur] != cur)
    {
      path.push_back(cur);
      cur = state.local_pivot[cur];
    }
    const std::size_t root = state.pivot[cur] == kUnset ? cur : state.pivot[cur];
    std::size_t base_hops = state.pivot[cur] == kUnset ? 0 : state.hops[cur];
    if (state.pivot[cur] == kUnset)
    {
      state.pivot[cur] = cur;
      state.hops[cur] = 0;
    }
    for (auto it = path.rbegin(); it != path.rend(); ++it)
    {
      ++base_hops;
      state.pivot[*it] = root;
      state.hops[*it] = base_hops;
    }
  }
}

/// Batch pivot seeking over a whole window: neighbourhoods, authorities,
/// local pivots, then authority ascent.
inline AuthorityState seek_pivots(std::span<const TweetPtr> window, const SemanticIndex& semantics,
                                  const GeneratorParams& params)
{
  AuthorityState state;
  state.tweets = resolve_window(window, semantics);
  const std::size_t n = state.size();

  SpatialGrid<std::size_t> grid(params.bandwidth_m);
  for (std::size_t i = 0; i < n; ++i)
  {
    grid.insert(state.tweets[i].tweet->location, i);
  }

  state.neighborhood.resize(n);
  state.terms.resize(n);
  state.authority.resize(n);
  for (std::size_t d = 0; d < n; ++d)
  {
    compute_neighborhood(state.tweets, grid, d, semantics, params, state.neighborhood[d],
                         state.terms[d]);
    state.authority[d] = authority_from_terms(state.terms[d]);
  }

  state.local_pivot.resize(n);
  for (std::size_t d = 0; d < n; ++d)
  {
    state.local_pivot[d] = local_pivot(state, d);
  }
  authority_ascent(state);
  return state;
}

/// A geo-topical cluster anchored at a pivot; members sorted by id.
struct CandidateEvent
{
  TweetPtr pivot;
  std::vector<TweetPtr> members;
  Timestamp created_at = 0;

  friend bool operator==(const CandidateEvent& a, const CandidateEvent& b)
  {
    if (a.pivot->id != b.pivot->id || a.created_at != b.created_at ||
        a.members.size() != b.members.size())
    {
      return false;
    }
    for (std::size_t i = 0; i < a.members.size(); ++i)
    {
      if (a.members[i]->id != b.members[i]->id)
      {
        return false;
      }
    }
    return true;
  }
};

/// Groups tweets by pivot, keeps groups of at least min_support tweets, and
/// orders candidates by pivot id.
inline std::vector<CandidateEvent> form_candidates(const AuthorityState& state,
                                                   std::size_t min_support, Timestamp created_at)
{
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t d = 0; d < state.size(); ++d)
  {
    groups[state.pivot[d]].push_back(d);
  }
  std::vector<CandidateEvent> out;
  for (const auto& [p, members] : groups)
  {
    if (members.size() < min_support)
    {
      continue;
    }
    CandidateEvent c;
    c.pivot = state.tweets[p].tweet;
    c.created_at = created_at;
    c.members.reserve(members.size());
    for (std::size_t m : members)
    {
      c.members.push_back(state.tweets[m].tweet);
    }
    out.push_back(std::move(c));
  }
  return out;
}

/// Id-keyed view of a clustering, used to compare the batch and incremental paths.
struct ClusteringView
{
  struct Entry
  {
    std::vector<std::string> neighborhood;
    double authority = 0.0;
    std::string local_pivot;
    std::string pivot;
    friend bool operator==(const Entry&, const Entry&) = default;
  };
  std::map<std::string, Entry> tweets;

  friend bool operator==(const ClusteringView&, const ClusteringView&) = default;
};

inline ClusteringView view_of(const AuthorityState& state)
{
  ClusteringView v;
  for (std::size_t d = 0; d < state.size(); ++d)
  {
    ClusteringView::Entry e;
    for (std::size_t n : state.neighborhood[d])
    {
      e.neighborhood.push_back(state.tweets[n].tweet->id);
    }
    e.authority = state.authority[d];
    e.local_pivot = state.tweets[state.local_pivot[d]].tweet->id;
    e.pivot = state.tweets[state.pivot[d]].tweet->id;
    v.tweets.emplace(state.tweets[d].tweet->id, std::move(e));
  }
  return v;
}

}  // namespace radar
