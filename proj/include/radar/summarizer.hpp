#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "radar/geo.hpp"
#include "radar/ingest.hpp"
#include "radar/io.hpp"

namespace radar
{
/// Coordinates are summed in fixed point (1e-7 degree units, about 1 cm), so
/// every tweet-cluster field is an exact integer and the additive laws hold
/// exactly.
inline constexpr double kCoordinateScale = 1e7;

inline int64_t to_fixed(double degrees)
{
  return static_cast<int64_t>(std::llround(degrees * kCoordinateScale));
}

/// Additive where-when-what summary of a set of tweets.
struct TweetCluster
{
  uint64_t id = 0;
  int64_t n = 0;
  std::array<int64_t, 2> ml{0, 0};      // linear sums of (lat, lon), fixed point
  std::array<__int128, 2> msl{0, 0};    // squared sums of (lat, lon), fixed point
  int64_t mt = 0;                       // sum of timestamps
  __int128 mst = 0;                     // sum of squared timestamps
  std::map<std::string, int64_t> me;    // keyword -> occurrences

  static TweetCluster of(const Tweet& t, uint64_t id)
  {
    TweetCluster c;
    c.id = id;
    c.absorb(t);
    return c;
  }

  void absorb(const Tweet& t)
  {
    const int64_t lat = to_fixed(t.location.lat);
    const int64_t lon = to_fixed(t.location.lon);
    ++n;
    ml[0] += lat;
    ml[1] += lon;
    msl[0] += static_cast<__int128>(lat) * lat;
    msl[1] += static_cast<__int128>(lon) * lon;
    mt += t.timestamp;
    mst += static_cast<__int128>(t.timestamp) * t.timestamp;
    for (const auto& k : t.keywords)
    {
      ++me[k];
    }
  }

  /// Field-wise sum; the merged cluster keeps the smaller id.
  void merge(const TweetCluster& other)
  {
    id = std::min(id, other.id);
    n += other.n;
    for (int i = 0; i < 2; ++i)
    {
      ml[i] += other.ml[i];
      msl[i] += other.msl[i];
    }
    mt += other.mt;
    mst += other.mst;
    for (const auto& [k, c] : other.me)
    {
      me[k] += c;
    }
  }

  GeoPoint center() const
  {
    return {static_cast<double>(ml[0]) / static_cast<double>(n) / kCoordinateScale,
            static_cast<double>(ml[1]) / static_cast<double>(n) / kCoordinateScale};
  }

  double mean_time() const { return static_cast<double>(mt) / static_cast<double>(n); }

  /// Per-coordinate variance in squared degrees, from the exact n*msl - ml^2.
  std::array<double, 2> location_variance() const
  {
    std::array<double, 2> out{};
    for (int i = 0; i < 2; ++i)
    {
      const __int128 numer = static_cast<__int128>(n) * msl[i] -
                             static_cast<__int128>(ml[i]) * ml[i];
      out[i] = static_cast<double>(numer) / (static_cast<double>(n) * static_cast<double>(n)) /
               (kCoordinateScale * kCoordinateScale);
    }
    return out;
  }

  double time_variance() const
  {
    const __int128 numer = static_cast<__int128>(n) * mst - static_cast<__int128>(mt) * mt;
    return static_cast<double>(numer) / (static_cast<double>(n) * static_cast<double>(n));
  }

  /// Root-mean-square distance of members from the centre, in meters.
  double spatial_deviation_m() const
  {
    const auto var = location_variance();
    const double to_m = deg_to_rad(1.0) * kEarthRadiusM;
    const double lat_m2 = var[0] * to_m * to_m;
    const double coslat = std::cos(deg_to_rad(center().lat));
    const double lon_m2 = var[1] * to_m * to_m * coslat * coslat;
    return std::sqrt(std::max(0.0, lat_m2 + lon_m2));
  }

  /// Additive fields only (the id is bookkeeping).
  bool same_summary(const TweetCluster& o) const
  {
    return n == o.n && ml == o.ml && msl == o.msl && mt == o.mt && mst == o.mst && me == o.me;
  }

  friend bool operator==(const TweetCluster& a, const TweetCluster& b)
  {
    return a.id == b.id && a.same_summary(b);
  }

  void write(std::ostream& out) const
  {
    out << id << " " << n << " " << ml[0] << " " << ml[1] << " " << format_i128(msl[0]) << " "
        << format_i128(msl[1]) << " " << mt << " " << format_i128(mst) << " " << me.size();
    for (const auto& [k, c] : me)
    {
      out << " " << k << " " << c;
    }
    out << "\n";
  }

  static TweetCluster read(std::istream& in)
  {
    TweetCluster c;
    c.id = parse_number<uint64_t>(expect_token(in, "cluster id"));
    c.n = parse_number<int64_t>(expect_token(in, "cluster n"));
    c.ml[0] = parse_number<int64_t>(expect_token(in, "ml"));
    c.ml[1] = parse_number<int64_t>(expect_token(in, "ml"));
    c.msl[0] = parse_i128(expect_token(in, "msl"));
    c.msl[1] = parse_i128(expect_token(in, "msl"));
    c.mt = parse_number<int64_t>(expect_token(in, "mt"));
    c.mst = parse_i128(expect_token(in, "mst"));
    const auto k = parse_number<std::size_t>(expect_token(in, "keyword count"));
    for (std::size_t i = 0; i < k; ++i)
    {
      auto word = expect_token(in, "keyword");
      c.me[word] = parse_number<int64_t>(expect_token(in, "keyword count"));
    }
    if (c.n < 1)
    {
      throw CorruptStateError("tweet cluster with n < 1");
    }
    return c;
  }
};

/// Expected occurrences of `keyword` at `location`: each cluster's count
/// weighted by the Epanechnikov kernel of its centre distance.
inline double estimate_occurrences(const std::vector<TweetCluster>& clusters,
                                   const std::string& keyword, const GeoPoint& location,
                                   double bandwidth_m)
{
  double total = 0.0;
  for (const auto& c : clusters)
  {
    auto it = c.me.find(keyword);
    if (it == c.me.end())
    {
      continue;
    }
    total += static_cast<double>(it->second) *
             epanechnikov(haversine_m(location, c.center()), bandwidth_m);
  }
  return total;
}

struct TimelineParams
{
  std::size_t max_clusters = 1000;
  double boundary_factor = 2.0;
  double singleton_radius_m = 500.0;
  Timestamp stale_age_s = 24 * 3600;
  int64_t stale_max_size = 5;
};

/// Online CluStream-style clustering of the stream into tweet clusters.
class Timeline
{
public:
  explicit Timeline(TimelineParams params = {}) : params_(params) {}

  const TimelineParams& params() const { return params_; }
  const std::vector<TweetCluster>& active() const { return active_; }

  /// Absorbs the tweet into the closest cluster when it lies within that
  /// cluster's boundary, otherwise opens a new cluster; then enforces the cap.
  void update(const Tweet& t)
  {
    const auto closest = closest_to(t.location);
    if (closest && closest->second <= boundary_of(active_[closest->first]))
    {
      active_[closest->first].absorb(t);
      moved(closest->first);
    }
    else
    {
      active_.push_back(TweetCluster::of(t, next_id_++));
      centers_.push_back(active_.back().center());
      nearest_.push_back({});
      added(active_.size() - 1);
    }
    enforce_cap(t.timestamp);
  }

  /// Boundary radius: r standard deviations, or the default for singletons.
  double boundary_of(const TweetCluster& c) const
  {
    if (c.n <= 1)
    {
      return params_.singleton_radius_m;
    }
    return params_.boundary_factor * c.spatial_deviation_m();
  }

  friend bool operator==(const Timeline& a, const Timeline& b)
  {
    return a.active_ == b.active_ && a.next_id_ == b.next_id_;
  }

  void write(std::ostream& out) const
  {
    out << "next_id " << next_id_ << "\n";
    out << "clusters " << active_.size() << "\n";
    for (const auto& c : active_)
    {
      c.write(out);
    }
  }

  void read(std::istream& in)
  {
    expect_keyword(in, "next_id");
    next_id_ = parse_number<uint64_t>(expect_token(in, "next id"));
    expect_keyword(in, "clusters");
    const auto n = parse_number<std::size_t>(expect_token(in, "cluster count"));
    active_.clear();
    for (std::size_t i = 0; i < n; ++i)
    {
      active_.push_back(TweetCluster::read(in));
    }
    rebuild_index();
  }

private:
  struct Nearest
  {
    std::size_t index = 0;
    double distance = std::numeric_limits<double>::infinity();
  };

  static bool closer(double d1, uint64_t id1, double d2, uint64_t id2)
  {
    return d1 < d2 || (d1 == d2 && id1 < id2);
  }

  std::optional<std::pair<std::size_t, double>> closest_to(const GeoPoint& p) const
  {
    std::optional<std::pair<std::size_t, double>> best;
    for (std::size_t i = 0; i < active_.size(); ++i)
    {
      const double d = haversine_m(p, centers_[i]);
      if (!best || closer(d, active_[i].id, best->second, active_[best->first].id))
      {
        best = std::make_pair(i, d);
      }
    }
    return best;
  }

  Nearest nearest_other(std::size_t i) const
  {
    Nearest best;
    bool found = false;
    for (std::size_t j = 0; j < active_.size(); ++j)
    {
      if (j == i)
      {
        continue;
      }
      const double d = haversine_m(centers_[i], centers_[j]);
      if (!found || closer(d, active_[j].id, best.distance, active_[best.index].id))
      {
        best = {j, d};
        found = true;
      }
    }
    return best;
  }

  /// Cluster i is new: find its neighbour and let it become others' neighbour.
  void added(std::size_t i)
  {
    nearest_[i] = nearest_other(i);
    for (std::size_t j = 0; j < active_.size(); ++j)
    {
      if (j == i)
      {
        continue;
      }
      const double d = haversine_m(centers_[i], centers_[j]);
      if (closer(d, active_[i].id, nearest_[j].distance, active_[nearest_[j].index].id))
      {
        nearest_[j] = {i, d};
      }
    }
  }

  /// Cluster i changed its centre.
  void moved(std::size_t i)
  {
    centers_[i] = active_[i].center();
    nearest_[i] = nearest_other(i);
    for (std::size_t j = 0; j < active_.size(); ++j)
    {
      if (j == i)
      {
        continue;
      }
      if (nearest_[j].index == i)
      {
        nearest_[j] = nearest_other(j);
        continue;
      }
      const double d = haversine_m(centers_[i], centers_[j]);
      if (closer(d, active_[i].id, nearest_[j].distance, active_[nearest_[j].index].id))
      {
        nearest_[j] = {i, d};
      }
    }
  }

  void erase_at(std::size_t i)
  {
    active_.erase(active_.begin() + static_cast<std::ptrdiff_t>(i));
    centers_.erase(centers_.begin() + static_cast<std::ptrdiff_t>(i));
    nearest_.erase(nearest_.begin() + static_cast<std::ptrdiff_t>(i));
    for (std::size_t j = 0; j < active_.size(); ++j)
    {
      if (nearest_[j].index == i)
      {
        nearest_[j] = nearest_other(j);
      }
      else if (nearest_[j].index > i)
      {
        --nearest_[j].index;
      }
    }
  }

  void rebuild_index()
  {
    centers_.clear();
    nearest_.clear();
    for (const auto& c : active_)
    {
      centers_.push_back(c.center());
    }
    nearest_.resize(active_.size());
    for (std::size_t i = 0; i < active_.size(); ++i)
    {
      nearest_[i] = nearest_other(i);
    }
  }

  void enforce_cap(Timestamp now)
  {
    if (active_.size() <= params_.max_clusters)
    {
      return;
    }
    for (std::size_t i = active_.size(); i-- > 0;)
    {
      const auto& c = active_[i];
      if (static_cast<double>(now) - c.mean_time() > static_cast<double>(params_.stale_age_s) &&
          c.n < params_.stale_max_size)
      {
        erase_at(i);
      }
    }
    while (active_.size() > params_.max_clusters && active_.size() >= 2)
    {
      std::size_t a = 0;
      for (std::size_t i = 1; i < active_.size(); ++i)
      {
        if (pair_closer(i, a))
        {
          a = i;
        }
      }
      std::size_t b = nearest_[a].index;
      if (active_[b].id < active_[a].id)
      {
        std::swap(a, b);
      }
      active_[a].merge(active_[b]);
      erase_at(b);
      if (b < a)
      {
        --a;
      }
      moved(a);
    }
  }

  /// Orders clusters by (nearest distance, smaller id of the pair, larger id).
  bool pair_closer(std::size_t i, std::size_t j) const
  {
    const auto key = [&](std::size_t x) {
      const uint64_t p = active_[x].id;
      const uint64_t q = active_[nearest_[x].index].id;
      return std::make_tuple(nearest_[x].distance, std::min(p, q), std::max(p, q));
    };
    return key(i) < key(j);
  }

  TimelineParams params_;
  std::vector<TweetCluster> active_;
  std::vector<GeoPoint> centers_;
  std::vector<Nearest> nearest_;
  uint64_t next_id_ = 1;
};

struct PyramidParams
{
  int64_t base = 2;  // a
  int level = 1;     // l: each order keeps a^l + 1 snapshots
};

/// Pyramidal time frame: a snapshot taken at tick t is filed under the
/// largest order i with base^i dividing t, and each order keeps only its
/// base^level + 1 most recent snapshots.
template <typename Payload>
class PyramidSnapshots
{
public:
  using Entry = std::pair<int64_t, std::shared_ptr<const Payload>>;

  explicit PyramidSnapshots(PyramidParams params = {}) : params_(params)
  {
    if (params_.base < 2 || params_.level < 0)
    {
      throw std::invalid_argument("pyramid base must be >= 2 and level >= 0");
    }
    capacity_ = 1;
    for (int i = 0; i < params_.level; ++i)
    {
      capacity_ *= static_cast<std::size_t>(params_.base);
    }
    capacity_ += 1;
  }

  const PyramidParams& params() const { return params_; }
  std::size_t capacity_per_order() const { return capacity_; }

  int order_of(int64_t tick) const
  {
    if (tick < 1)
    {
      throw std::invalid_argument("snapshot ticks start at 1");
    }
    int order = 0;
    while (tick % params_.base == 0)
    {
      tick /= params_.base;
      ++order;
    }
    return order;
  }

  void store(int64_t tick, std::shared_ptr<const Payload> payload)
  {
    if (tick <= last_tick_)
    {
      throw std::invalid_argument("snapshot ticks must increase");
    }
    auto& bucket = orders_[order_of(tick)];
    bucket.emplace_back(tick, std::move(payload));
    if (bucket.size() > capacity_)
    {
      bucket.pop_front();
    }
    last_tick_ = tick;
  }

  /// The stored snapshot with the largest tick <= t.
  const Entry& retrieve(int64_t t) const
  {
    const Entry* best = nullptr;
    for (const auto& [order, bucket] : orders_)
    {
      for (const auto& e : bucket)
      {
        if (e.first <= t && (!best || e.first > best->first))
        {
          best = &e;
        }
      }
    }
    if (!best)
    {
      throw std::out_of_range("no snapshot at or before tick " + std::to_string(t));
    }
    return *best;
  }

  std::size_t size() const
  {
    std::size_t n = 0;
    for (const auto& [order, bucket] : orders_)
    {
      n += bucket.size();
    }
    return n;
  }

  std::vector<int64_t> ticks() const
  {
    std::vector<int64_t> out;
    for (const auto& [order, bucket] : orders_)
    {
      for (const auto& e : bucket)
      {
        out.push_back(e.first);
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  int64_t last_tick() const { return last_tick_; }

  const std::map<int, std::deque<Entry>>& orders() const { return orders_; }

  /// Restores one entry verbatim (persistence).
  void restore(int order, int64_t tick, std::shared_ptr<const Payload> payload)
  {
    orders_[order].emplace_back(tick, std::move(payload));
    last_tick_ = std::max(last_tick_, tick);
  }

  void restore_last_tick(int64_t tick) { last_tick_ = tick; }

private:
  PyramidParams params_;
  std::size_t capacity_ = 2;
  std::map<int, std::deque<Entry>> orders_;
  int64_t last_tick_ = 0;
};

/// Timeline clusters frozen at a tick, with the stream time they represent.
struct TimelineSnapshot
{
  Timestamp at = 0;
  std::vector<TweetCluster> clusters;

  friend bool operator==(const TimelineSnapshot&, const TimelineSnapshot&) = default;
};

/// The activity timeline: live clusters plus their pyramidal history.
class ActivityTimeline
{
public:
  ActivityTimeline(TimelineParams timeline = {}, PyramidParams pyramid = {})
      : live_(timeline), history_(pyramid)
  {
  }

  void update(const Tweet& t) { live_.update(t); }

  void snapshot(int64_t tick, Timestamp at)
  {
    history_.store(tick, std::make_shared<const TimelineSnapshot>(
                             TimelineSnapshot{at, live_.active()}));
  }

  const Timeline& live() const { return live_; }
  const PyramidSnapshots<TimelineSnapshot>& history() const { return history_; }

  const TimelineSnapshot& retrieve(int64_t tick) const { return *history_.retrieve(tick).second; }

  friend bool operator==(const ActivityTimeline& a, const ActivityTimeline& b)
  {
    if (!(a.live_ == b.live_) || a.history_.orders().size() != b.history_.orders().size() ||
        a.history_.last_tick() != b.history_.last_tick())
    {
      return false;
    }
    auto ia = a.history_.orders().begin();
    auto ib = b.history_.orders().begin();
    for (; ia != a.history_.orders().end(); ++ia, ++ib)
    {
      if (ia->first != ib->first || ia->second.size() != ib->second.size())
      {
        return false;
      }
      for (std::size_t k = 0; k < ia->second.size(); ++k)
      {
        if (ia->second[k].first != ib->second[k].first ||
            !(*ia->second[k].second == *ib->second[k].second))
        {
          return false;
        }
      }
    }
    return true;
  }

  void write(std::ostream& out) const
  {
    live_.write(out);
    out << "last_tick " << history_.last_tick() << "\n";
    out << "snapshots " << history_.size() << "\n";
    for (const auto& [order, bucket] : history_.orders())
    {
      for (const auto& [tick, snap] : bucket)
      {
        out << "snapshot " << order << " " << tick << " " << snap->at << " "
            << snap->clusters.size() << "\n";
        for (const auto& c : snap->clusters)
        {
          c.write(out);
        }
      }
    }
  }

  void read(std::istream& in)
  {
    live_.read(in);
    history_ = PyramidSnapshots<TimelineSnapshot>(history_.params());
    expect_keyword(in, "last_tick");
    const auto last = parse_number<int64_t>(expect_token(in, "last tick"));
    expect_keyword(in, "snapshots");
    const auto n = parse_number<std::size_t>(expect_token(in, "snapshot count"));
    for (std::size_t i = 0; i < n; ++i)
    {
      expect_keyword(in, "snapshot");
      const int order = parse_number<int>(expect_token(in, "order"));
      const auto tick = parse_number<int64_t>(expect_token(in, "tick"));
      TimelineSnapshot snap;
      snap.at = parse_number<int64_t>(expect_token(in, "snapshot time"));
      const auto m = parse_number<std::size_t>(expect_token(in, "cluster count"));
      for (std::size_t k = 0; k < m; ++k)
      {
        snap.clusters.push_back(TweetCluster::read(in));
      }
      history_.restore(order, tick, std::make_shared<const TimelineSnapshot>(std::move(snap)));
    }
    if (history_.last_tick() > last)
    {
      throw CorruptStateError("snapshot tick beyond recorded last tick");
    }
    history_.restore_last_tick(last);
  }

private:
  Timeline live_;
  PyramidSnapshots<TimelineSnapshot> history_;
};

}  // namespace radar
