#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "radar/event_store.hpp"
#include "support/query_oracle.hpp"

namespace radar
{
namespace
{
using testing::random_event;
using testing::random_query;
using testing::scan_query;

EventStore random_store(std::size_t n, uint64_t seed)
{
  std::mt19937_64 rng(seed);
  EventStore store;
  for (std::size_t i = 0; i < n; ++i)
  {
    store.put(random_event(i, rng));
  }
  return store;
}

TEST(TopKeywords, FrequencyThenAlphabetical)
{
  std::vector<Tweet> members(3);
  members[0].keywords = {"b", "c"};
  members[1].keywords = {"a", "c"};
  members[2].keywords = {"b", "c", "d"};
  EXPECT_EQ(top_keywords(members, 10), (std::vector<std::string>{"c", "b", "a", "d"}));
  EXPECT_EQ(top_keywords(members, 2), (std::vector<std::string>{"c", "b"}));
  EXPECT_TRUE(top_keywords({}, 5).empty());
}

TEST(EventQuery, RejectsMalformedQueries)
{
  EventQuery q;
  q.from = 10;
  q.to = 5;
  EXPECT_THROW(q.validate(), QueryError);

  EventQuery partial;
  partial.lat = 41.9;
  partial.lon = -87.6;
  EXPECT_THROW(partial.validate(), QueryError);

  EventQuery zero_radius;
  zero_radius.lat = 41.9;
  zero_radius.lon = -87.6;
  zero_radius.radius_m = 0.0;
  EXPECT_THROW(zero_radius.validate(), QueryError);

  EventQuery off_globe;
  off_globe.lat = 91.0;
  off_globe.lon = 0.0;
  off_globe.radius_m = 10.0;
  EXPECT_THROW(off_globe.validate(), QueryError);

  EventQuery empty_keyword;
  empty_keyword.keyword = "";
  EXPECT_THROW(empty_keyword.validate(), QueryError);

  EXPECT_THROW(EventStore{}.query(q), QueryError);
}

TEST(EventStore, EmptyRangeReturnsNothing)
{
  EventStore store;
  EventRecord e;
  e.event_id = "ev-a";
  e.first_seen = 100;
  e.last_seen = 200;
  store.put(e);
  EventQuery q;
  q.from = q.to = 50;
  EXPECT_TRUE(store.query(q).empty());
  q.from = q.to = 200;
  EXPECT_EQ(store.query(q).size(), 1u);
}

TEST(EventStore, OrdersByScoreThenId)
{
  EventStore store;
  for (const auto& [id, score] : std::vector<std::pair<std::string, double>>{
           {"ev-c", 0.5}, {"ev-a", 0.5}, {"ev-b", 0.9}, {"ev-d", 0.1}})
  {
    EventRecord e;
    e.event_id = id;
    e.score = score;
    store.put(e);
  }
  std::vector<std::string> ids;
  for (const auto& e : store.query({}))
  {
    ids.push_back(e.event_id);
  }
  EXPECT_EQ(ids, (std::vector<std::string>{"ev-b", "ev-a", "ev-c", "ev-d"}));
}

TEST(EventStore, PutSupersedesAndReindexes)
{
  EventStore store;
  EventRecord e;
  e.event_id = "ev-x";
  e.top_keywords = {"old"};
  store.put(e);
  e.top_keywords = {"new"};
  e.score = 0.7;
  store.put(e);
  EXPECT_EQ(store.size(), 1u);
  EventQuery q;
  q.keyword = "old";
  EXPECT_TRUE(store.query(q).empty());
  q.keyword = "new";
  ASSERT_EQ(store.query(q).size(), 1u);
  EXPECT_DOUBLE_EQ(store.query(q)[0].score, 0.7);
}

TEST(EventStore, MatchesLinearScan)
{
  const auto store = random_store(2000, 11);
  std::mt19937_64 rng(12);
  for (int i = 0; i < 300; ++i)
  {
    const auto q = random_query(rng);
    ASSERT_EQ(store.query(q), scan_query(store, q)) << "query " << i;
  }
}

TEST(EventStore, RoundTripPreservesRecordsAndQueries)
{
  const auto store = random_store(500, 21);
  std::stringstream first;
  store.write(first);
  const auto loaded = EventStore::read(first);
  EXPECT_EQ(loaded, store);
  std::stringstream second;
  loaded.write(second);
  EXPECT_EQ(first.str(), second.str());
  std::mt19937_64 rng(22);
  for (int i = 0; i < 100; ++i)
  {
    const auto q = random_query(rng);
    EXPECT_EQ(loaded.query(q), store.query(q));
  }
}

TEST(EventStore, TruncatedInputIsCorrupt)
{
  std::stringstream in("events 2\n{\"event_id\":\"x\"}\n");
  EXPECT_THROW(EventStore::read(in), CorruptStateError);
}

TEST(EventJson, SummaryListsMemberIds)
{
  std::mt19937_64 rng(3);
  const auto e = random_event(7, rng);
  const auto summary = event_json(e, false);
  EXPECT_FALSE(summary.contains("members"));
  ASSERT_EQ(summary.at("member_ids").size(), e.members.size());
  EXPECT_EQ(summary.at("member_ids")[0], e.members[0].id);
  EXPECT_EQ(event_from_json(event_json(e, true)), e);
}

}  // namespace
}  // namespace radar
