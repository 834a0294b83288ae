#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "radar/geo.hpp"
#include "radar/ingest.hpp"
#include "radar/io.hpp"

namespace radar
{
/// A classified local event.
struct EventRecord
{
  std::string event_id;
  GeoPoint location;  // pivot tweet location
  Timestamp first_seen = 0;
  Timestamp last_seen = 0;
  std::vector<std::string> top_keywords;
  double score = 0.0;
  Timestamp detected_at = 0;  // window end of the shift that produced this version
  std::vector<Tweet> members;  // ordered by id

  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

/// Keywords ranked by frequency over the members, ties alphabetical.
inline std::vector<std::string> top_keywords(const std::vector<Tweet>& members, std::size_t limit)
{
  std::map<std::string, int64_t> counts;
  for (const auto& t : members)
  {
    for (const auto& k : t.keywords)
    {
      ++counts[k];
    }
  }
  std::vector<std::pair<std::string, int64_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ranked.size() && i < limit; ++i)
  {
    out.push_back(ranked[i].first);
  }
  return out;
}

class QueryError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

/// Time range plus optional keyword and optional circle.
struct EventQuery
{
  Timestamp from = std::numeric_limits<Timestamp>::min();
  Timestamp to = std::numeric_limits<Timestamp>::max();
  std::optional<std::string> keyword;
  std::optional<double> lat;
  std::optional<double> lon;
  std::optional<double> radius_m;

  /// Throws QueryError when the query is malformed.
  void validate() const
  {
    if (from > to)
    {
      throw QueryError("'from' must not be after 'to'");
    }
    const int geo = (lat ? 1 : 0) + (lon ? 1 : 0) + (radius_m ? 1 : 0);
    if (geo != 0 && geo != 3)
    {
      throw QueryError("lat, lon and radius_m must be given together");
    }
    if (geo == 3)
    {
      if (!valid_coordinates(*lat, *lon))
      {
        throw QueryError("center coordinates out of range");
      }
      if (!(*radius_m > 0.0) || !std::isfinite(*radius_m))
      {
        throw QueryError("radius_m must be a positive number");
      }
    }
    if (keyword && keyword->empty())
    {
      throw QueryError("keyword must not be empty");
    }
  }

  bool has_center() const { return radius_m.has_value(); }

  /// The three predicates, applied to one record.
  bool matches(const EventRecord& e) const
  {
    if (e.last_seen < from || e.first_seen > to)
    {
      return false;
    }
    if (keyword &&
        std::find(e.top_keywords.begin(), e.top_keywords.end(), *keyword) == e.top_keywords.end())
    {
      return false;
    }
    if (has_center() && haversine_m({*lat, *lon}, e.location) > *radius_m)
    {
      return false;
    }
    return true;
  }
};

/// Orders by score descending, then event id.
inline bool ranks_before(const EventRecord& a, const EventRecord& b)
{
  if (a.score != b.score)
  {
    return a.score > b.score;
  }
  return a.event_id < b.event_id;
}

inline nlohmann::ordered_json tweet_json(const Tweet& t)
{
  nlohmann::ordered_json j;
  j["id"] = t.id;
  j["user_id"] = t.user_id;
  j["timestamp"] = t.timestamp;
  j["lat"] = t.location.lat;
  j["lon"] = t.location.lon;
  j["keywords"] = t.keywords;
  return j;
}

/// JSON form of a record; member tweets are inlined only when asked.
inline nlohmann::ordered_json event_json(const EventRecord& e, bool inline_members)
{
  nlohmann::ordered_json j;
  j["event_id"] = e.event_id;
  j["lat"] = e.location.lat;
  j["lon"] = e.location.lon;
  j["start"] = e.first_seen;
  j["end"] = e.last_seen;
  j["top_keywords"] = e.top_keywords;
  j["score"] = e.score;
  j["detected_at"] = e.detected_at;
  if (inline_members)
  {
    auto members = nlohmann::ordered_json::array();
    for (const auto& t : e.members)
    {
      members.push_back(tweet_json(t));
    }
    j["members"] = std::move(members);
  }
  else
  {
    auto ids = nlohmann::ordered_json::array();
    for (const auto& t : e.members)
    {
      ids.push_back(t.id);
    }
    j["member_ids"] = std::move(ids);
  }
  return j;
}

inline EventRecord event_from_json(const nlohmann::json& j)
{
  EventRecord e;
  e.event_id = j.at("event_id").get<std::string>();
  e.location = {j.at("lat").get<double>(), j.at("lon").get<double>()};
  e.first_seen = j.at("start").get<Timestamp>();
  e.last_seen = j.at("end").get<Timestamp>();
  e.top_keywords = j.at("top_keywords").get<std::vector<std::string>>();
  e.score = j.at("score").get<double>();
  e.detected_at = j.at("detected_at").get<Timestamp>();
  for (const auto& m : j.at("members"))
  {
    Tweet t;
    t.id = m.at("id").get<std::string>();
    t.user_id = m.at("user_id").get<std::string>();
    t.timestamp = m.at("timestamp").get<Timestamp>();
    t.location = {m.at("lat").get<double>(), m.at("lon").get<double>()};
    t.keywords = m.at("keywords").get<std::vector<std::string>>();
    e.members.push_back(std::move(t));
  }
  return e;
}

/// Detected events keyed by id; storing an id again supersedes the old record.
class EventStore
{
public:
  void put(EventRecord e)
  {
    auto it = records_.find(e.event_id);
    if (it != records_.end())
    {
      unindex(it->second);
      it->second = std::move(e);
      index(it->second);
    }
    else
    {
      auto [pos, inserted] = records_.emplace(e.event_id, std::move(e));
      index(pos->second);
    }
  }

  std::size_t size() const { return records_.size(); }

  const EventRecord* find(const std::string& id) const
  {
    auto it = records_.find(id);
    return it == records_.end() ? nullptr : &it->second;
  }

  const std::map<std::string, EventRecord>& records() const { return records_; }

  /// All events matching the query, best score first, then by id.
  std::vector<EventRecord> query(const EventQuery& q) const
  {
    q.validate();
    std::vector<const EventRecord*> hits;
    if (q.keyword)
    {
      auto it = postings_.find(*q.keyword);
      if (it != postings_.end())
      {
        for (const auto& id : it->second)
        {
          const auto& e = records_.at(id);
          if (q.matches(e))
          {
            hits.push_back(&e);
          }
        }
      }
    }
    else
    {
      for (const auto& [id, e] : records_)
      {
        if (q.matches(e))
        {
          hits.push_back(&e);
        }
      }
    }
    std::sort(hits.begin(), hits.end(),
              [](const EventRecord* a, const EventRecord* b) { return ranks_before(*a, *b); });
    std::vector<EventRecord> out;
    out.reserve(hits.size());
    for (const auto* e : hits)
    {
      out.push_back(*e);
    }
    return out;
  }

  friend bool operator==(const EventStore& a, const EventStore& b) { return a.records_ == b.records_; }

  /// One JSON record per line, ordered by id.
  void write(std::ostream& out) const
  {
    out << "events " << records_.size() << "\n";
    for (const auto& [id, e] : records_)
    {
      out << event_json(e, true).dump() << "\n";
    }
  }

  static EventStore read(std::istream& in)
  {
    expect_keyword(in, "events");
    const auto n = parse_number<std::size_t>(expect_token(in, "event count"));
    std::string line;
    std::getline(in, line);
    EventStore store;
    for (std::size_t i = 0; i < n; ++i)
    {
      if (!std::getline(in, line))
      {
        throw CorruptStateError("event store truncated");
      }
      try
      {
        store.put(event_from_json(nlohmann::json::parse(line)));
      }
      catch (const nlohmann::json::exception& e)
      {
        throw CorruptStateError(std::string("bad event record: ") + e.what());
      }
    }
    return store;
  }

private:
  void index(const EventRecord& e)
  {
    for (const auto& k : e.top_keywords)
    {
      postings_[k].insert(e.event_id);
    }
  }

  void unindex(const EventRecord& e)
  {
    for (const auto& k : e.top_keywords)
    {
      auto it = postings_.find(k);
      if (it != postings_.end())
      {
        it->second.erase(e.event_id);
        if (it->second.empty())
        {
          postings_.erase(it);
        }
      }
    }
  }

  std::map<std::string, EventRecord> records_;
  std::unordered_map<std::string, std::set<std::string>> postings_;
};

}  // namespace radar
