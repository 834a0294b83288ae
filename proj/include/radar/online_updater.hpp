#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "radar/candidate_generator.hpp"
#include "radar/geo.hpp"
#include "radar/ingest.hpp"
#include "radar/keyword_graph.hpp"

namespace radar
{
/// Per-shift bookkeeping of the incremental path.
struct UpdateStats
{
  std::size_t removed = 0;
  std::size_t inserted = 0;
  std::size_t semantic_senders = 0;  // surviving tweets whose outgoing terms were recomputed
  std::size_t changed = 0;           // authority changed, insertions included
  std::size_t visited = 0;           // local pivots recomputed
  std::size_t mutated = 0;
  std::size_t repivoted = 0;         // tweets whose pivot was re-derived
};

/// Clustering state that follows the query window shift by shift: the diff
/// is applied to neighbourhoods and authorities, mutated tweets are found by
/// reverse search, and pivots are re-derived only below mutated tweets.
class OnlineUpdater
{
public:
  using Slot = uint32_t;

  explicit OnlineUpdater(GeneratorParams params = {}) : params_(params), grid_(params.bandwidth_m) {}

  const GeneratorParams& params() const { return params_; }
  std::size_t size() const { return by_id_.size(); }
  const UpdateStats& last_stats() const { return stats_; }

  /// Applies removals and insertions and recomputes the affected
  /// neighbourhoods and authorities. `refreshed` lists keywords whose vicinity
  /// was recomputed since the previous shift. Returns, sorted, the ids of the
  /// tweets whose authority changed (insertions included).
  std::vector<std::string> apply_diff(const WindowDiff& diff, std::span<const KeywordId> refreshed,
                                      const SemanticIndex& semantics)
  {
    if (pending_)
    {
      throw std::logic_error("previous shift was not completed");
    }
    validate(diff);
    pending_ = true;
    stats_ = {};

    for (const auto& t : diff.removed)
    {
      remove_tweet(by_id_.at(t->id));
    }
    recompute_outgoing(refreshed, semantics);

    for (const auto& t : diff.inserted)
    {
      add_tweet(t, semantics);
    }
    for (Slot i : inserted_)
    {
      full_neighborhood(i, semantics);
    }
    for (Slot i : inserted_)
    {
      grid_.for_each_near(node(i).rt.tweet->location, [&](Slot e) {
        if (!node(e).inserted)
        {
          if (auto term = neighbor_term(node(i).rt, node(e).rt, semantics, params_))
          {
            upsert_member(e, i, *term);
          }
        }
      });
    }

    std::vector<std::string> changed;
    changed_.clear();
    for (Slot d : authority_dirty_)
    {
      Node& n = node(d);
      if (!n.alive)
      {
        continue;
      }
      const double a = authority_from_terms(n.terms);
      if (n.inserted || a != n.authority)
      {
        n.authority = a;
        changed_.push_back(d);
        changed.push_back(n.rt.tweet->id);
      }
    }
    std::sort(changed.begin(), changed.end());
    stats_.changed = changed.size();
    return changed;
  }

  /// Recomputes l(d) for every tweet with a changed or removed neighbour, a
  /// changed neighbourhood, or no previous state, and returns, sorted, the ids
  /// of those whose local pivot differs (insertions included).
  std::vector<std::string> find_mutated()
  {
    require_pending();
    std::vector<Slot> visit(inserted_.begin(), inserted_.end());
    visit.insert(visit.end(), membership_changed_.begin(), membership_changed_.end());
    for (Slot c : changed_)
    {
      const auto& listed = node(c).listed_in;
      visit.insert(visit.end(), listed.begin(), listed.end());
    }
    std::sort(visit.begin(), visit.end());
    visit.erase(std::unique(visit.begin(), visit.end()), visit.end());

    mutated_.clear();
    std::vector<std::string> out;
    for (Slot d : visit)
    {
      Node& n = node(d);
      if (!n.alive)
      {
        continue;
      }
      ++stats_.visited;
      const Slot l = argmax_neighbor(d);
      if (!n.inserted && l == n.local_pivot)
      {
        continue;
      }
      if (!n.inserted && n.local_pivot != d)
      {
        erase_value(node(n.local_pivot).children, d);
      }
      n.local_pivot = l;
      if (l != d)
      {
        node(l).children.push_back(d);
      }
      mutated_.push_back(d);
      out.push_back(n.rt.tweet->id);
    }
    std::sort(out.begin(), out.end());
    stats_.mutated = out.size();
    return out;
  }

  /// Re-derives pivots below mutated tweets, regroups, and completes the shift.
  /// Returns, sorted, the pivot ids whose group changed.
  std::vector<std::string> refresh_events()
  {
    require_pending();
    // Every tweet whose ascent path runs through a mutated tweet.
    std::vector<Slot> below(mutated_.begin(), mutated_.end());
    for (Slot s : below)
    {
      node(s).repivot = true;
    }
    for (std::size_t i = 0; i < below.size(); ++i)
    {
      for (Slot c : node(below[i]).children)
      {
        if (node(c).alive && !node(c).repivot)
        {
          node(c).repivot = true;
          below.push_back(c);
        }
      }
    }
    stats_.repivoted = below.size();

    std::vector<std::string> touched;
    for (Slot s : below)
    {
      if (!node(s).inserted)
      {
        leave_group(s, touched);
      }
    }
    std::vector<Slot> path;
    for (Slot s : below)
    {
      path.clear();
      Slot cur = s;
      while (node(cur).repivot && node(cur).local_pivot != cur)
      {
        path.push_back(cur);
        cur = node(cur).local_pivot;
      }
      const Slot root = node(cur).repivot ? cur : node(cur).pivot;
      if (node(cur).repivot)
      {
        node(cur).pivot = root;
        node(cur).repivot = false;
      }
      for (Slot p : path)
      {
        node(p).pivot = root;
        node(p).repivot = false;
      }
    }
    for (Slot s : below)
    {
      join_group(s, touched);
    }

    for (Slot r : removed_)
    {
      leave_group(r, touched);
    }
    for (Slot r : removed_)
    {
      release(r);
    }
    for (Slot i : inserted_)
    {
      node(i).inserted = false;
    }
    for (Slot d : membership_changed_)
    {
      node(d).membership_changed = false;
    }
    for (Slot d : authority_dirty_)
    {
      node(d).authority_dirty = false;
    }
    removed_.clear();
    inserted_.clear();
    membership_changed_.clear();
    authority_dirty_.clear();
    changed_.clear();
    mutated_.clear();
    pending_ = false;

    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    return touched;
  }

  /// All three stages of one shift.
  UpdateStats shift(const WindowDiff& diff, std::span<const KeywordId> refreshed,
                    const SemanticIndex& semantics)
  {
    apply_diff(diff, refreshed, semantics);
    find_mutated();
    refresh_events();
    return stats_;
  }

  /// Drops all state and loads `window` as a single insertion.
  void rebuild(std::span<const TweetPtr> window, const SemanticIndex& semantics)
  {
    *this = OnlineUpdater(params_);
    WindowDiff diff;
    diff.inserted.assign(window.begin(), window.end());
    shift(diff, {}, semantics);
  }

  /// Groups of at least min_support tweets, ordered by pivot id.
  std::vector<CandidateEvent> candidates(Timestamp created_at) const
  {
    std::vector<CandidateEvent> out;
    for (const auto& [pivot_id, members] : groups_)
    {
      if (members.size() < params_.min_support)
      {
        continue;
      }
      CandidateEvent c;
      c.pivot = node(by_id_.at(pivot_id)).rt.tweet;
      c.created_at = created_at;
      c.members.reserve(members.size());
      for (const auto& [id, t] : members)
      {
        c.members.push_back(t);
      }
      out.push_back(std::move(c));
    }
    return out;
  }

  ClusteringView view() const
  {
    ClusteringView v;
    for (const auto& [id, s] : by_id_)
    {
      const Node& n = node(s);
      ClusteringView::Entry e;
      for (Slot m : n.members)
      {
        e.neighborhood.push_back(node(m).rt.tweet->id);
      }
      e.authority = n.authority;
      e.local_pivot = node(n.local_pivot).rt.tweet->id;
      e.pivot = node(n.pivot).rt.tweet->id;
      v.tweets.emplace(id, std::move(e));
    }
    return v;
  }

  /// True when every reverse list is exactly the transpose of the neighbourhoods
  /// and every children list the inverse of the local pivots.
  bool consistent() const
  {
    std::map<std::pair<Slot, Slot>, int> edges;
    std::map<std::pair<Slot, Slot>, int> kids;
    for (const auto& [id, d] : by_id_)
    {
      const Node& n = node(d);
      if (!std::is_sorted(n.members.begin(), n.members.end(),
                          [&](Slot a, Slot b) { return id_less(a, b); }))
      {
        return false;
      }
      for (Slot m : n.members)
      {
        ++edges[{m, d}];
      }
      for (Slot m : n.listed_in)
      {
        --edges[{d, m}];
      }
      if (n.local_pivot != d)
      {
        ++kids[{n.local_pivot, d}];
      }
      for (Slot c : n.children)
      {
        --kids[{d, c}];
      }
    }
    for (const auto& [e, count] : edges)
    {
      if (count != 0)
      {
        return false;
      }
    }
    for (const auto& [e, count] : kids)
    {
      if (count != 0)
      {
        return false;
      }
    }
    return true;
  }

  /// Tweet ids currently listing `id` in their neighbourhood, sorted.
  std::vector<std::string> listed_in(const std::string& id) const
  {
    std::vector<std::string> out;
    for (Slot s : node(by_id_.at(id)).listed_in)
    {
      out.push_back(node(s).rt.tweet->id);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

private:
  struct Node
  {
    ResolvedTweet rt;
    std::vector<Slot> members;  // N(d), ordered by tweet id
    std::vector<double> terms;  // parallel to members
    std::vector<Slot> listed_in;
    std::vector<Slot> children;  // tweets whose local pivot is this one
    double authority = 0.0;
    Slot local_pivot = 0;
    Slot pivot = 0;
    bool alive = false;
    bool inserted = false;
    bool removed = false;
    bool membership_changed = false;
    bool authority_dirty = false;
    bool repivot = false;
  };

  Node& node(Slot s) { return nodes_[s]; }
  const Node& node(Slot s) const { return nodes_[s]; }

  bool id_less(Slot a, Slot b) const { return node(a).rt.tweet->id < node(b).rt.tweet->id; }

  static void erase_value(std::vector<Slot>& v, Slot x)
  {
    auto it = std::find(v.begin(), v.end(), x);
    if (it != v.end())
    {
      *it = v.back();
      v.pop_back();
    }
  }

  void require_pending() const
  {
    if (!pending_)
    {
      throw std::logic_error("no shift in progress");
    }
  }

  void validate(const WindowDiff& diff) const
  {
    std::unordered_map<std::string, int> seen;
    for (const auto& t : diff.removed)
    {
      if (!by_id_.count(t->id) || seen[t->id]++)
      {
        throw std::invalid_argument("diff removes tweet not in window: " + t->id);
      }
    }
    for (const auto& t : diff.inserted)
    {
      if (by_id_.count(t->id) || seen[t->id]++)
      {
        throw std::invalid_argument("diff inserts tweet already in window: " + t->id);
      }
    }
  }

  void mark_membership(Slot d)
  {
    if (!node(d).membership_changed)
    {
      node(d).membership_changed = true;
      membership_changed_.push_back(d);
    }
    mark_authority(d);
  }

  void mark_authority(Slot d)
  {
    if (!node(d).authority_dirty)
    {
      node(d).authority_dirty = true;
      authority_dirty_.push_back(d);
    }
  }

  std::size_t position_in(const Node& n, Slot s) const
  {
    auto it = std::lower_bound(n.members.begin(), n.members.end(), s,
                               [&](Slot a, Slot b) { return id_less(a, b); });
    return static_cast<std::size_t>(it - n.members.begin());
  }

  /// Puts `s` into N(e) with the given term, or updates its term.
  void upsert_member(Slot e, Slot s, double term)
  {
    Node& n = node(e);
    const std::size_t pos = position_in(n, s);
    if (pos < n.members.size() && n.members[pos] == s)
    {
      if (n.terms[pos] != term)
      {
        n.terms[pos] = term;
        mark_authority(e);
      }
      return;
    }
    n.members.insert(n.members.begin() + static_cast<std::ptrdiff_t>(pos), s);
    n.terms.insert(n.terms.begin() + static_cast<std::ptrdiff_t>(pos), term);
    node(s).listed_in.push_back(e);
    mark_membership(e);
  }

  void drop_member(Slot e, Slot s)
  {
    Node& n = node(e);
    const std::size_t pos = position_in(n, s);
    if (pos < n.members.size() && n.members[pos] == s)
    {
      n.members.erase(n.members.begin() + static_cast<std::ptrdiff_t>(pos));
      n.terms.erase(n.terms.begin() + static_cast<std::ptrdiff_t>(pos));
      erase_value(node(s).listed_in, e);
      mark_membership(e);
    }
  }

  void remove_tweet(Slot r)
  {
    Node& n = node(r);
    for (Slot d : std::vector<Slot>(n.listed_in))
    {
      if (d != r)
      {
        drop_member(d, r);
      }
    }
    for (Slot m : n.members)
    {
      if (m != r)
      {
        erase_value(node(m).listed_in, r);
      }
    }
    n.members.clear();
    n.terms.clear();
    n.listed_in.clear();
    if (n.local_pivot != r)
    {
      erase_value(node(n.local_pivot).children, r);
    }
    grid_.erase(n.rt.tweet->location, r);
    for (KeywordId k : distinct(n.rt.keyword_ids))
    {
      erase_value(postings_[k], r);
    }
    by_id_.erase(n.rt.tweet->id);
    n.alive = false;
    n.removed = true;
    removed_.push_back(r);
    ++stats_.removed;
  }

  static std::vector<KeywordId> distinct(std::vector<KeywordId> ids)
  {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
  }

  /// Outgoing terms of surviving tweets that use a refreshed vicinity.
  void recompute_outgoing(std::span<const KeywordId> refreshed, const SemanticIndex& semantics)
  {
    std::vector<Slot> senders;
    for (KeywordId k : refreshed)
    {
      if (k < postings_.size())
      {
        senders.insert(senders.end(), postings_[k].begin(), postings_[k].end());
      }
    }
    std::sort(senders.begin(), senders.end());
    senders.erase(std::unique(senders.begin(), senders.end()), senders.end());
    stats_.semantic_senders = senders.size();
    for (Slot s : senders)
    {
      grid_.for_each_near(node(s).rt.tweet->location, [&](Slot e) {
        if (auto term = neighbor_term(node(s).rt, node(e).rt, semantics, params_))
        {
          upsert_member(e, s, *term);
        }
        else
        {
          drop_member(e, s);
        }
      });
    }
  }

  void add_tweet(const TweetPtr& t, const SemanticIndex& semantics)
  {
    Slot s;
    if (!free_.empty())
    {
      s = free_.back();
      free_.pop_back();
    }
    else
    {
      s = static_cast<Slot>(nodes_.size());
      nodes_.emplace_back();
    }
    Node& n = node(s);
    n = Node{};
    n.rt = resolve(t, semantics);
    n.alive = true;
    n.inserted = true;
    n.local_pivot = s;
    n.pivot = s;
    by_id_.emplace(t->id, s);
    grid_.insert(t->location, s);
    for (KeywordId k : distinct(n.rt.keyword_ids))
    {
      if (postings_.size() <= k)
      {
        postings_.resize(k + 1);
      }
      postings_[k].push_back(s);
    }
    inserted_.push_back(s);
    mark_authority(s);
    ++stats_.inserted;
  }

  void full_neighborhood(Slot d, const SemanticIndex& semantics)
  {
    std::vector<std::pair<Slot, double>> found;
    grid_.for_each_near(node(d).rt.tweet->location, [&](Slot other) {
      if (auto term = neighbor_term(node(other).rt, node(d).rt, semantics, params_))
      {
        found.emplace_back(other, *term);
      }
    });
    std::sort(found.begin(), found.end(),
              [&](const auto& a, const auto& b) { return id_less(a.first, b.first); });
    Node& n = node(d);
    n.members.clear();
    n.terms.clear();
    for (const auto& [other, term] : found)
    {
      n.members.push_back(other);
      n.terms.push_back(term);
      node(other).listed_in.push_back(d);
    }
  }

  Slot argmax_neighbor(Slot d) const
  {
    Slot best = d;
    for (Slot m : node(d).members)
    {
      if (ranks_above(node(m).authority, node(m).rt.tweet->id, node(best).authority,
                      node(best).rt.tweet->id))
      {
        best = m;
      }
    }
    return best;
  }

  void leave_group(Slot s, std::vector<std::string>& touched)
  {
    const std::string& pivot_id = node(node(s).pivot).rt.tweet->id;
    auto it = groups_.find(pivot_id);
    if (it == groups_.end())
    {
      return;
    }
    it->second.erase(node(s).rt.tweet->id);
    touched.push_back(pivot_id);
    if (it->second.empty())
    {
      groups_.erase(it);
    }
  }

  void join_group(Slot s, std::vector<std::string>& touched)
  {
    const std::string& pivot_id = node(node(s).pivot).rt.tweet->id;
    groups_[pivot_id].emplace(node(s).rt.tweet->id, node(s).rt.tweet);
    touched.push_back(pivot_id);
  }

  void release(Slot r)
  {
    node(r) = Node{};
    free_.push_back(r);
  }

  GeneratorParams params_;
  std::vector<Node> nodes_;
  std::vector<Slot> free_;
  std::unordered_map<std::string, Slot> by_id_;
  SpatialGrid<Slot> grid_;
  std::vector<std::vector<Slot>> postings_;
  std::map<std::string, std::map<std::string, TweetPtr>> groups_;

  bool pending_ = false;
  std::vector<Slot> removed_;
  std::vector<Slot> inserted_;
  std::vector<Slot> membership_changed_;
  std::vector<Slot> authority_dirty_;
  std::vector<Slot> changed_;
  std::vector<Slot> mutated_;
  UpdateStats stats_;
};

}  // namespace radar
