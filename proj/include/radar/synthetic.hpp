#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "radar/geo.hpp"
#include "radar/ingest.hpp"

namespace radar
{
/// Latitude/longitude rectangle.
struct GeoBox
{
  double min_lat = 41.70;
  double max_lat = 42.00;
  double min_lon = -87.85;
  double max_lon = -87.55;
};

/// Background chatter plus planted local bursts.
struct SyntheticParams
{
  uint64_t seed = 1;
  /// The common vocabulary depends only on this seed, so streams with
  /// different `seed` share it.
  uint64_t vocabulary_seed = 7;
  std::string id_prefix = "s";
  Timestamp start = 1'700'000'400;
  Timestamp duration_s = 36 * 3600;
  /// No burst starts before start + warmup_s.
  Timestamp warmup_s = 8 * 3600;
  GeoBox box;

  double background_per_hour = 250.0;
  std::size_t vocabulary_size = 300;
  double zipf_exponent = 1.0;
  std::size_t min_keywords = 2;
  std::size_t max_keywords = 4;
  std::size_t users = 5000;

  std::size_t bursts = 50;
  Timestamp burst_span_s = 1800;
  double burst_sigma_m = 100.0;
  std::size_t burst_min_tweets = 15;
  std::size_t burst_max_tweets = 25;
  std::size_t burst_vocabulary = 4;
  std::size_t burst_keywords = 3;

  void validate() const
  {
    if (duration_s <= 0 || warmup_s < 0 || burst_span_s <= 0 ||
        warmup_s + burst_span_s > duration_s)
    {
      throw std::invalid_argument("synthetic stream: bursts do not fit after the warm-up");
    }
    if (vocabulary_size == 0 || min_keywords == 0 || min_keywords > max_keywords ||
        max_keywords > vocabulary_size)
    {
      throw std::invalid_argument("synthetic stream: bad background vocabulary settings");
    }
    if (burst_min_tweets == 0 || burst_min_tweets > burst_max_tweets || burst_keywords == 0 ||
        burst_keywords > burst_vocabulary)
    {
      throw std::invalid_argument("synthetic stream: bad burst settings");
    }
    if (users == 0 || background_per_hour < 0.0 || burst_sigma_m < 0.0)
    {
      throw std::invalid_argument("synthetic stream: bad rates");
    }
    if (!(box.min_lat < box.max_lat && box.min_lon < box.max_lon) ||
        !valid_coordinates(box.min_lat, box.min_lon) || !valid_coordinates(box.max_lat, box.max_lon))
    {
      throw std::invalid_argument("synthetic stream: bad bounding box");
    }
  }
};

struct PlantedBurst
{
  std::size_t index = 0;
  GeoPoint center;
  Timestamp start = 0;
  Timestamp end = 0;
  std::vector<std::string> vocabulary;
  std::vector<std::string> tweet_ids;
};

struct SyntheticStream
{
  std::vector<Tweet> tweets;  // ordered by (timestamp, id)
  std::vector<PlantedBurst> bursts;
  std::unordered_map<std::string, std::size_t> burst_of;

  std::optional<std::size_t> burst_for(const std::string& tweet_id) const
  {
    auto it = burst_of.find(tweet_id);
    if (it == burst_of.end())
    {
      return std::nullopt;
    }
    return it->second;
  }

  /// The stream as replayable JSON lines.
  void write_stream(std::ostream& out) const
  {
    for (const auto& t : tweets)
    {
      out << serialize_record(t) << "\n";
    }
  }

  /// One JSON object per planted burst.
  void write_truth(std::ostream& out) const
  {
    for (const auto& b : bursts)
    {
      nlohmann::ordered_json j;
      j["burst"] = b.index;
      j["lat"] = b.center.lat;
      j["lon"] = b.center.lon;
      j["start"] = b.start;
      j["end"] = b.end;
      j["vocabulary"] = b.vocabulary;
      j["tweet_ids"] = b.tweet_ids;
      out << j.dump() << "\n";
    }
  }
};

namespace detail
{
/// Pronounceable lowercase pseudo-word of `syllables` consonant-vowel pairs.
inline std::string pseudo_word(std::mt19937_64& rng, std::size_t syllables)
{
  static constexpr std::string_view consonants = "bdfgklmnprstvz";
  static constexpr std::string_view vowels = "aeiou";
  std::string w;
  for (std::size_t i = 0; i < syllables; ++i)
  {
    w.push_back(consonants[rng() % consonants.size()]);
    w.push_back(vowels[rng() % vowels.size()]);
  }
  return w;
}

inline std::vector<std::string> fresh_words(std::mt19937_64& rng, std::size_t n, std::size_t syllables,
                                            std::unordered_set<std::string>& used)
{
  const StopwordSet stopwords;
  std::vector<std::string> out;
  while (out.size() < n)
  {
    auto w = pseudo_word(rng, syllables);
    if (!stopwords.contains(w) && used.insert(w).second)
    {
      out.push_back(std::move(w));
    }
  }
  return out;
}

/// Offsets a point by metric north/east displacements.
inline GeoPoint displaced(const GeoPoint& p, double north_m, double east_m)
{
  const double dlat = north_m / kEarthRadiusM * 180.0 / std::numbers::pi;
  const double dlon =
      east_m / (kEarthRadiusM * std::cos(deg_to_rad(p.lat))) * 180.0 / std::numbers::pi;
  return {p.lat + dlat, p.lon + dlon};
}

template <typename Rng>
std::vector<std::string> distinct_sample(std::span<const std::string> pool, std::size_t k,
                                         std::discrete_distribution<std::size_t>* weights, Rng& rng)
{
  std::vector<std::string> out;
  while (out.size() < k)
  {
    const std::size_t i = weights ? (*weights)(rng) : rng() % pool.size();
    if (std::find(out.begin(), out.end(), pool[i]) == out.end())
    {
      out.push_back(pool[i]);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}
}  // namespace detail

/// The shared background vocabulary, most frequent word first.
inline std::vector<std::string> background_vocabulary(const SyntheticParams& params)
{
  std::mt19937_64 rng(params.vocabulary_seed);
  std::unordered_set<std::string> used;
  return detail::fresh_words(rng, params.vocabulary_size, 2, used);
}

inline SyntheticStream generate_stream(const SyntheticParams& params)
{
  params.validate();
  std::mt19937_64 rng(params.seed);
  const auto vocabulary = background_vocabulary(params);
  std::unordered_set<std::string> used(vocabulary.begin(), vocabulary.end());

  std::vector<double> zipf(vocabulary.size());
  for (std::size_t r = 0; r < zipf.size(); ++r)
  {
    zipf[r] = 1.0 / std::pow(static_cast<double>(r + 1), params.zipf_exponent);
  }
  std::discrete_distribution<std::size_t> word(zipf.begin(), zipf.end());
  std::uniform_real_distribution<double> lat(params.box.min_lat, params.box.max_lat);
  std::uniform_real_distribution<double> lon(params.box.min_lon, params.box.max_lon);
  auto user = [&] { return "u" + std::to_string(rng() % params.users); };

  struct Draft
  {
    Tweet tweet;
    uint64_t order;
    std::optional<std::size_t> burst;
  };
  std::vector<Draft> drafts;

  const double hours = static_cast<double>(params.duration_s) / 3600.0;
  std::poisson_distribution<std::size_t> background_count(params.background_per_hour * hours);
  const std::size_t n_background = background_count(rng);
  for (std::size_t i = 0; i < n_background; ++i)
  {
    Tweet t;
    t.user_id = user();
    t.timestamp = params.start + static_cast<Timestamp>(rng() % params.duration_s);
    t.location = {lat(rng), lon(rng)};
    const std::size_t k =
        params.min_keywords + rng() % (params.max_keywords - params.min_keywords + 1);
    t.keywords = detail::distinct_sample(vocabulary, k, &word, rng);
    drafts.push_back({std::move(t), rng(), std::nullopt});
  }

  SyntheticStream out;
  std::normal_distribution<double> jitter(0.0, params.burst_sigma_m);
  const Timestamp latest_start = params.duration_s - params.burst_span_s - params.warmup_s;
  for (std::size_t b = 0; b < params.bursts; ++b)
  {
    PlantedBurst burst;
    burst.index = b;
    burst.center = {lat(rng), lon(rng)};
    burst.start = params.start + params.warmup_s + static_cast<Timestamp>(rng() % (latest_start + 1));
    burst.end = burst.start + params.burst_span_s;
    burst.vocabulary = detail::fresh_words(rng, params.burst_vocabulary, 3, used);
    std::sort(burst.vocabulary.begin(), burst.vocabulary.end());
    const std::size_t n =
        params.burst_min_tweets + rng() % (params.burst_max_tweets - params.burst_min_tweets + 1);
    for (std::size_t i = 0; i < n; ++i)
    {
      Tweet t;
      t.user_id = user();
      t.timestamp = burst.start + static_cast<Timestamp>(rng() % params.burst_span_s);
      const double north = jitter(rng);
      const double east = jitter(rng);
      t.location = detail::displaced(burst.center, north, east);
      t.keywords = detail::distinct_sample(burst.vocabulary, params.burst_keywords, nullptr, rng);
      drafts.push_back({std::move(t), rng(), b});
    }
    out.bursts.push_back(std::move(burst));
  }

  std::sort(drafts.begin(), drafts.end(), [](const Draft& a, const Draft& b) {
    if (a.tweet.timestamp != b.tweet.timestamp)
    {
      return a.tweet.timestamp < b.tweet.timestamp;
    }
    return a.order < b.order;
  });
  out.tweets.reserve(drafts.size());
  for (std::size_t i = 0; i < drafts.size(); ++i)
  {
    char id[48];
    std::snprintf(id, sizeof(id), "%s-%07zu", params.id_prefix.c_str(), i);
    drafts[i].tweet.id = id;
    if (drafts[i].burst)
    {
      out.bursts[*drafts[i].burst].tweet_ids.push_back(id);
      out.burst_of.emplace(id, *drafts[i].burst);
    }
    out.tweets.push_back(std::move(drafts[i].tweet));
  }
  return out;
}

/// The burst that contributes more than half of `member_ids`, if any.
inline std::optional<std::size_t> majority_burst(std::span<const std::string> member_ids,
                                                 const SyntheticStream& stream)
{
  std::unordered_map<std::size_t, std::size_t> counts;
  for (const auto& id : member_ids)
  {
    if (auto b = stream.burst_for(id))
    {
      if (2 * ++counts[*b] > member_ids.size())
      {
        return *b;
      }
    }
  }
  return std::nullopt;
}

}  // namespace radar
