#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "radar/io.hpp"

namespace radar
{
using KeywordId = uint32_t;

/// Weighted keyword co-occurrence graph. Keyword ids are dense and assigned in
/// first-seen order; adjacency rows are kept sorted by neighbour id.
class KeywordGraph
{
public:
  struct Edge
  {
    KeywordId to = 0;
    uint64_t weight = 0;
    friend bool operator==(const Edge&, const Edge&) = default;
  };

  std::size_t size() const { return names_.size(); }

  std::optional<KeywordId> find(const std::string& keyword) const
  {
    auto it = index_.find(keyword);
    if (it == index_.end())
    {
      return std::nullopt;
    }
    return it->second;
  }

  KeywordId id_of(const std::string& keyword) const
  {
    auto id = find(keyword);
    if (!id)
    {
      throw std::out_of_range("keyword not in graph: " + keyword);
    }
    return *id;
  }

  const std::string& name(KeywordId id) const { return names_.at(id); }

  KeywordId add_node(const std::string& keyword)
  {
    auto [it, inserted] = index_.try_emplace(keyword, static_cast<KeywordId>(names_.size()));
    if (inserted)
    {
      names_.push_back(keyword);
      adjacency_.emplace_back();
      strength_.push_back(0);
    }
    return it->second;
  }

  /// Adds every unordered pair of distinct keywords with weight +1. Returns
  /// the distinct keyword ids of the tweet.
  std::vector<KeywordId> observe(std::span<const std::string> keywords)
  {
    std::vector<KeywordId> ids;
    ids.reserve(keywords.size());
    for (const auto& k : keywords)
    {
      ids.push_back(add_node(k));
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    for (std::size_t i = 0; i < ids.size(); ++i)
    {
      for (std::size_t j = i + 1; j < ids.size(); ++j)
      {
        add_weight(ids[i], ids[j], 1);
      }
    }
    return ids;
  }

  void add_weight(KeywordId u, KeywordId v, uint64_t w)
  {
    if (u == v)
    {
      throw std::invalid_argument("self co-occurrence is not recorded");
    }
    bump(u, v, w);
    bump(v, u, w);
    strength_[u] += w;
    strength_[v] += w;
  }

  uint64_t weight(KeywordId u, KeywordId v) const
  {
    const auto& row = adjacency_.at(u);
    auto it = std::lower_bound(row.begin(), row.end(), v,
                               [](const Edge& e, KeywordId id) { return e.to < id; });
    return (it != row.end() && it->to == v) ? it->weight : 0;
  }

  uint64_t strength(KeywordId u) const { return strength_.at(u); }

  std::span<const Edge> neighbors(KeywordId u) const { return adjacency_.at(u); }

  /// p(u -> v) = w(u, v) / strength(u); nullopt for an isolated u.
  std::optional<double> transition_probability(KeywordId u, KeywordId v) const
  {
    const uint64_t s = strength(u);
    if (s == 0)
    {
      return std::nullopt;
    }
    return static_cast<double>(weight(u, v)) / static_cast<double>(s);
  }

  /// Canonical edge list (u < v by keyword text), independent of id assignment.
  std::vector<std::tuple<std::string, std::string, uint64_t>> canonical_edges() const
  {
    std::vector<std::tuple<std::string, std::string, uint64_t>> out;
    for (KeywordId u = 0; u < adjacency_.size(); ++u)
    {
      for (const Edge& e : adjacency_[u])
      {
        if (names_[u] < names_[e.to])
        {
          out.emplace_back(names_[u], names_[e.to], e.weight);
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  std::vector<std::string> canonical_nodes() const
  {
    auto out = names_;
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Structural equality over keyword text, ignoring id assignment order.
  bool same_structure(const KeywordGraph& other) const
  {
    return canonical_nodes() == other.canonical_nodes() &&
           canonical_edges() == other.canonical_edges();
  }

  /// Exact (id-order preserving) equality.
  friend bool operator==(const KeywordGraph& a, const KeywordGraph& b)
  {
    return a.names_ == b.names_ && a.adjacency_ == b.adjacency_ && a.strength_ == b.strength_;
  }

  /// Body: node lines in id order, then `u v weight` edge lines with u < v by id.
  void write(std::ostream& out) const
  {
    out << "nodes " << names_.size() << "\n";
    for (const auto& n : names_)
    {
      out << n << "\n";
    }
    std::size_t edges = 0;
    for (KeywordId u = 0; u < adjacency_.size(); ++u)
    {
      for (const Edge& e : adjacency_[u])
      {
        edges += e.to > u ? 1 : 0;
      }
    }
    out << "edges " << edges << "\n";
    for (KeywordId u = 0; u < adjacency_.size(); ++u)
    {
      for (const Edge& e : adjacency_[u])
      {
        if (e.to > u)
        {
          out << names_[u] << " " << names_[e.to] << " " << e.weight << "\n";
        }
      }
    }
  }

  static KeywordGraph read(std::istream& in)
  {
    KeywordGraph g;
    expect_keyword(in, "nodes");
    const auto n = parse_number<std::size_t>(expect_token(in, "node count"));
    for (std::size_t i = 0; i < n; ++i)
    {
      const auto name = expect_token(in, "node");
      if (g.add_node(name) != i)
      {
        throw CorruptStateError("duplicate keyword in graph state: " + name);
      }
    }
    expect_keyword(in, "edges");
    const auto m = parse_number<std::size_t>(expect_token(in, "edge count"));
    for (std::size_t i = 0; i < m; ++i)
    {
      const auto u = g.find(expect_token(in, "edge source"));
      const auto v = g.find(expect_token(in, "edge target"));
      const auto w = parse_number<uint64_t>(expect_token(in, "edge weight"));
      if (!u || !v || *u == *v || w == 0)
      {
        throw CorruptStateError("invalid edge in graph state");
      }
      g.add_weight(*u, *v, w);
    }
    return g;
  }

private:
  void bump(KeywordId u, KeywordId v, uint64_t w)
  {
    auto& row = adjacency_[u];
    auto it = std::lower_bound(row.begin(), row.end(), v,
                               [](const Edge& e, KeywordId id) { return e.to < id; });
    if (it != row.end() && it->to == v)
    {
      it->weight += w;
    }
    else
    {
      row.insert(it, Edge{v, w});
    }
  }

  std::vector<std::string> names_;
  std::unordered_map<std::string, KeywordId> index_;
  std::vector<std::vector<Edge>> adjacency_;
  std::vector<uint64_t> strength_;
};

/// RWR scores from one source keyword, sorted by keyword id. Every stored
/// score is positive.
struct Vicinity
{
  KeywordId source = 0;
  std::vector<std::pair<KeywordId, double>> scores;

  double score(KeywordId v) const
  {
    auto it = std::lower_bound(scores.begin(), scores.end(), v,
                               [](const auto& e, KeywordId id) { return e.first < id; });
    return (it != scores.end() && it->first == v) ? it->second : 0.0;
  }

  friend bool operator==(const Vicinity&, const Vicinity&) = default;
};

namespace detail
{
/// Max-heap over keyword ids keyed by (residual, smaller id first), with
/// in-place key increases. Positions are indexed by keyword id.
class ResidualHeap
{
public:
  void reset(std::size_t n)
  {
    if (pos_.size() < n)
    {
      pos_.resize(n, kAbsent);
    }
  }

  bool empty() const { return heap_.empty(); }
  KeywordId top() const { return heap_.front(); }

  void push_or_raise(KeywordId v, const std::vector<double>& key)
  {
    if (pos_[v] == kAbsent)
    {
      pos_[v] = heap_.size();
      heap_.push_back(v);
    }
    sift_up(pos_[v], key);
  }

  KeywordId pop(const std::vector<double>& key)
  {
    const KeywordId out = heap_.front();
    pos_[out] = kAbsent;
    const KeywordId last = heap_.back();
    heap_.pop_back();
    if (!heap_.empty())
    {
      heap_[0] = last;
      pos_[last] = 0;
      sift_down(0, key);
    }
    return out;
  }

  void clear()
  {
    for (KeywordId v : heap_)
    {
      pos_[v] = kAbsent;
    }
    heap_.clear();
  }

private:
  static constexpr std::size_t kAbsent = static_cast<std::size_t>(-1);

  static bool above(KeywordId a, KeywordId b, const std::vector<double>& key)
  {
    return key[a] != key[b] ? key[a] > key[b] : a < b;
  }

  void place(std::size_t i, KeywordId v)
  {
    heap_[i] = v;
    pos_[v] = i;
  }

  void sift_up(std::size_t i, const std::vector<double>& key)
  {
    const KeywordId v = heap_[i];
    while (i > 0)
    {
      const std::size_t parent = (i - 1) / 2;
      if (!above(v, heap_[parent], key))
      {
        break;
      }
      place(i, heap_[parent]);
      i = parent;
    }
    place(i, v);
  }

  void sift_down(std::size_t i, const std::vector<double>& key)
  {
    const KeywordId v = heap_[i];
    const std::size_t n = heap_.size();
    while (true)
    {
      std::size_t best = 2 * i + 1;
      if (best >= n)
      {
        break;
      }
      if (best + 1 < n && above(heap_[best + 1], heap_[best], key))
      {
        ++best;
      }
      if (!above(heap_[best], v, key))
      {
        break;
      }
      place(i, heap_[best]);
      i = best;
    }
    place(i, v);
  }

  std::vector<KeywordId> heap_;
  std::vector<std::size_t> pos_;
};

/// Per-thread scratch for approximate_rwr, cleared through the touched list.
struct RwrWorkspace
{
  std::vector<double> score;
  std::vector<double> residual;
  std::vector<char> touched_flag;
  std::vector<KeywordId> touched;
  ResidualHeap heap;

  void prepare(std::size_t n)
  {
    if (score.size() < n)
    {
      score.resize(n, 0.0);
      residual.resize(n, 0.0);
      touched_flag.resize(n, 0);
    }
    heap.reset(n);
  }

  void touch(KeywordId v)
  {
    if (!touched_flag[v])
    {
      touched_flag[v] = 1;
      touched.push_back(v);
    }
  }

  void clear()
  {
    for (KeywordId v : touched)
    {
      score[v] = 0.0;
      residual[v] = 0.0;
      touched_flag[v] = 0;
    }
    touched.clear();
    heap.clear();
  }
};
}  // namespace detail

/// Approximate random walk with restart from `q` by residual pushing.
///
/// s(q) and p(q) start at alpha. The node u with the largest pending residual
/// is popped and each neighbour v receives (1 - alpha) * p(u -> v) * p(u) in
/// both its score and its residual; p(u) is then cleared. The loop runs while
/// that largest residual is at least alpha * epsilon / K, K being the number of
/// nodes holding residual. On exit the total residual is below alpha * epsilon,
/// which bounds the per-node error by epsilon; scores never exceed the exact
/// RWR probabilities.
///
/// Ties in the queue pop the smaller keyword id first, so the push sequence
/// does not depend on epsilon and shrinking epsilon only extends it.
inline Vicinity approximate_rwr(const KeywordGraph& graph, KeywordId q, double alpha,
                                double epsilon)
{
  if (q >= graph.size())
  {
    throw std::out_of_range("approximate_rwr: source keyword not in graph");
  }
  if (!(alpha > 0.0 && alpha < 1.0))
  {
    throw std::invalid_argument("approximate_rwr: alpha must lie in (0, 1)");
  }
  if (!(epsilon > 0.0))
  {
    throw std::invalid_argument("approximate_rwr: epsilon must be positive");
  }

  thread_local detail::RwrWorkspace ws;
  ws.prepare(graph.size());
  auto& score = ws.score;
  auto& residual = ws.residual;
  ws.touch(q);
  score[q] = alpha;
  residual[q] = alpha;
  ws.heap.push_or_raise(q, residual);

  const double budget = alpha * epsilon;
  std::size_t holding = 1;
  while (!ws.heap.empty())
  {
    const KeywordId u = ws.heap.top();
    if (residual[u] < budget / static_cast<double>(holding))
    {
      break;
    }
    ws.heap.pop(residual);
    const double pu = residual[u];
    residual[u] = 0.0;
    --holding;
    const uint64_t strength = graph.strength(u);
    if (strength == 0)
    {
      continue;
    }
    const double inv_strength = 1.0 / static_cast<double>(strength);
    for (const auto& e : graph.neighbors(u))
    {
      const double p_vu = static_cast<double>(e.weight) * inv_strength;
      const double delta = (1.0 - alpha) * p_vu * pu;
      ws.touch(e.to);
      score[e.to] += delta;
      double& pv = residual[e.to];
      holding += pv == 0.0 ? 1 : 0;
      pv += delta;
      ws.heap.push_or_raise(e.to, residual);
    }
  }

  Vicinity v;
  v.source = q;
  v.scores.reserve(ws.touched.size());
  for (KeywordId k : ws.touched)
  {
    if (score[k] > 0.0)
    {
      v.scores.emplace_back(k, score[k]);
    }
  }
  ws.clear();
  std::sort(v.scores.begin(), v.scores.end());
  return v;
}

struct RwrParams
{
  double alpha = 0.2;
  double epsilon = 1e-4;
  /// Cached vicinities are recomputed once the keyword's total incident weight
  /// has moved by more than this fraction since the vicinity was computed.
  double max_relative_drift = 0.10;
};

/// The co-occurrence graph together with a cache of vicinities for the
/// keywords currently in use. Semantic scores read only cached vicinities, so
/// a score is a pure function of the cache contents.
class SemanticIndex
{
public:
  struct CacheEntry
  {
    Vicinity vicinity;
    uint64_t strength_at_compute = 0;
    bool stale = false;
    friend bool operator==(const CacheEntry&, const CacheEntry&) = default;
  };

  explicit SemanticIndex(RwrParams params = {}) : params_(params) {}

  const RwrParams& params() const { return params_; }
  const KeywordGraph& graph() const { return graph_; }

  /// Adds a tweet's co-occurrences and flags cached vicinities whose keyword
  /// drifted past the tolerance. Returns the tweet's distinct keyword ids.
  std::vector<KeywordId> observe(std::span<const std::string> keywords)
  {
    auto ids = graph_.observe(keywords);
    if (cache_.size() < graph_.size())
    {
      cache_.resize(graph_.size());
    }
    if (ids.size() > 1)
    {
      for (KeywordId id : ids)
      {
        auto& entry = cache_[id];
        if (entry && !entry->stale && drifted(*entry, graph_.strength(id)))
        {
          entry->stale = true;
        }
      }
    }
    return ids;
  }

  /// Brings the cache in line with the keywords in use: missing or stale
  /// entries in `active` are computed, stale entries outside it are dropped.
  /// Returns the ids whose vicinity was (re)computed, sorted.
  std::vector<KeywordId> sync(std::span<const KeywordId> active)
  {
    if (cache_.size() < graph_.size())
    {
      cache_.resize(graph_.size());
    }
    std::vector<char> in_use(cache_.size(), 0);
    for (KeywordId id : active)
    {
      in_use.at(id) = 1;
    }
    std::vector<KeywordId> refreshed;
    for (KeywordId id = 0; id < cache_.size(); ++id)
    {
      auto& entry = cache_[id];
      if (in_use[id])
      {
        if (!entry || entry->stale)
        {
          entry = CacheEntry{approximate_rwr(graph_, id, params_.alpha, params_.epsilon),
                             graph_.strength(id), false};
          refreshed.push_back(id);
        }
      }
      else if (entry && entry->stale)
      {
        entry.reset();
      }
    }
    return refreshed;
  }

  bool has_vicinity(KeywordId id) const
  {
    return id < cache_.size() && cache_[id].has_value();
  }

  const Vicinity& vicinity(KeywordId id) const
  {
    if (!has_vicinity(id))
    {
      throw std::logic_error("vicinity not cached for keyword " + graph_.name(id));
    }
    return cache_[id]->vicinity;
  }

  /// S(from -> to): the mean of s_u(v) over all keyword pairs, multiplicity
  /// included. Summation follows the given keyword order.
  double semantic_score(std::span<const KeywordId> from, std::span<const KeywordId> to) const
  {
    if (from.empty() || to.empty())
    {
      throw std::invalid_argument("semantic_score: empty keyword set");
    }
    double total = 0.0;
    for (KeywordId u : from)
    {
      const Vicinity& vu = vicinity(u);
      for (KeywordId v : to)
      {
        total += vu.score(v);
      }
    }
    return total / (static_cast<double>(from.size()) * static_cast<double>(to.size()));
  }

  /// Keyword ids for a sorted keyword multiset; every keyword must be known.
  std::vector<KeywordId> ids_of(std::span<const std::string> keywords) const
  {
    std::vector<KeywordId> ids;
    ids.reserve(keywords.size());
    for (const auto& k : keywords)
    {
      ids.push_back(graph_.id_of(k));
    }
    return ids;
  }

  friend bool operator==(const SemanticIndex& a, const SemanticIndex& b)
  {
    return a.graph_ == b.graph_ && a.cache_ == b.cache_ && a.params_.alpha == b.params_.alpha &&
           a.params_.epsilon == b.params_.epsilon &&
           a.params_.max_relative_drift == b.params_.max_relative_drift;
  }

  void write_cache(std::ostream& out) const
  {
    std::size_t n = 0;
    for (const auto& e : cache_)
    {
      n += e ? 1 : 0;
    }
    out << "vicinities " << n << "\n";
    for (KeywordId id = 0; id < cache_.size(); ++id)
    {
      const auto& e = cache_[id];
      if (!e)
      {
        continue;
      }
      out << id << " " << e->strength_at_compute << " " << (e->stale ? 1 : 0) << " "
          << e->vicinity.scores.size();
      for (const auto& [k, s] : e->vicinity.scores)
      {
        out << " " << k << ":" << format_float(s);
      }
      out << "\n";
    }
  }

  void read_cache(std::istream& in)
  {
    cache_.assign(graph_.size(), std::nullopt);
    expect_keyword(in, "vicinities");
    const auto n = parse_number<std::size_t>(expect_token(in, "vicinity count"));
    for (std::size_t i = 0; i < n; ++i)
    {
      const auto id = parse_number<KeywordId>(expect_token(in, "vicinity id"));
      if (id >= graph_.size())
      {
        throw CorruptStateError("vicinity for unknown keyword id");
      }
      CacheEntry entry;
      entry.vicinity.source = id;
      entry.strength_at_compute = parse_number<uint64_t>(expect_token(in, "strength"));
      entry.stale = parse_number<int>(expect_token(in, "stale flag")) != 0;
      const auto m = parse_number<std::size_t>(expect_token(in, "vicinity size"));
      entry.vicinity.scores.reserve(m);
      for (std::size_t j = 0; j < m; ++j)
      {
        const auto tok = expect_token(in, "vicinity score");
        const auto colon = tok.find(':');
        if (colon == std::string::npos)
        {
          throw CorruptStateError("bad vicinity entry");
        }
        entry.vicinity.scores.emplace_back(
            parse_number<KeywordId>(std::string_view(tok).substr(0, colon)),
            parse_number<double>(std::string_view(tok).substr(colon + 1)));
      }
      cache_[id] = std::move(entry);
    }
  }

  KeywordGraph& mutable_graph() { return graph_; }

private:
  bool drifted(const CacheEntry& entry, uint64_t strength_now) const
  {
    const double base = static_cast<double>(entry.strength_at_compute);
    const double change = static_cast<double>(strength_now) - base;
    return std::abs(change) > params_.max_relative_drift * base;
  }

  RwrParams params_;
  KeywordGraph graph_;
  std::vector<std::optional<CacheEntry>> cache_;
};

}  // namespace radar
