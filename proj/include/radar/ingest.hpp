#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <istream>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "radar/geo.hpp"

namespace radar
{
using Timestamp = int64_t;

/// One geo-tagged message. `keywords` is a multiset kept in sorted order so
/// that equality and iteration order are canonical.
struct Tweet
{
  std::string id;
  std::string user_id;
  Timestamp timestamp = 0;
  GeoPoint location;
  std::vector<std::string> keywords;

  friend bool operator==(const Tweet&, const Tweet&) = default;
};

using TweetPtr = std::shared_ptr<const Tweet>;

/// Orders tweets by (timestamp, id); the window keeps its members in this order.
struct TweetTimeOrder
{
  bool operator()(const TweetPtr& a, const TweetPtr& b) const
  {
    if (a->timestamp != b->timestamp)
    {
      return a->timestamp < b->timestamp;
    }
    return a->id < b->id;
  }
};

// ---------------------------------------------------------------------------
// Tokenization

inline const std::vector<std::string>& default_stopword_list()
{
  // English stopwords with apostrophes removed, matching how the tokenizer
  // strips punctuation. Mirrored in data/stopwords.txt.
  static const std::vector<std::string> words = {
      "a",        "about",    "above",   "after",     "again",      "against", "ain",
      "all",      "am",       "an",      "and",       "any",        "are",     "aren",
      "arent",    "as",       "at",      "be",        "because",    "been",    "before",
      "being",    "below",    "between", "both",      "but",        "by",      "can",
      "couldn",   "couldnt",  "d",       "did",       "didn",       "didnt",   "do",
      "does",     "doesn",    "doesnt",  "doing",     "don",        "dont",    "down",
      "during",   "each",     "few",     "for",       "from",       "further", "had",
      "hadn",     "hadnt",    "has",     "hasn",      "hasnt",      "have",    "haven",
      "havent",   "having",   "he",      "her",       "here",       "hers",    "herself",
      "him",      "himself",  "his",     "how",       "i",          "if",      "in",
      "into",     "is",       "isn",     "isnt",      "it",         "its",     "itself",
      "just",     "ll",       "m",       "ma",        "me",         "mightn",  "mightnt",
      "more",     "most",     "mustn",   "mustnt",    "my",         "myself",  "needn",
      "neednt",   "no",       "nor",     "not",       "now",        "o",       "of",
      "off",      "on",       "once",    "only",      "or",         "other",   "our",
      "ours",     "ourselves", "out",    "over",      "own",        "re",      "s",
      "same",     "shan",     "shant",   "she",       "shes",       "should",  "shouldn",
      "shouldnt", "shouldve", "so",      "some",      "such",       "t",       "than",
      "that",     "thats",    "the",     "their",     "theirs",     "them",    "themselves",
      "then",     "there",    "these",   "they",      "this",       "those",   "through",
      "to",       "too",      "under",   "until",     "up",         "ve",      "very",
      "was",      "wasn",     "wasnt",   "we",        "were",       "weren",   "werent",
      "what",     "when",     "where",   "which",     "while",      "who",     "whom",
      "why",      "will",     "with",    "won",       "wont",       "wouldn",  "wouldnt",
      "y",        "you",      "youd",    "youll",     "your",       "youre",   "yours",
      "yourself", "yourselves", "youve"};
  return words;
}

class StopwordSet
{
public:
  StopwordSet() : words_(default_stopword_list().begin(), default_stopword_list().end()) {}

  explicit StopwordSet(std::unordered_set<std::string> words) : words_(std::move(words)) {}

  /// One word per line; blank lines and lines starting with '#' are ignored.
  static StopwordSet from_stream(std::istream& in)
  {
    std::unordered_set<std::string> words;
    std::string line;
    while (std::getline(in, line))
    {
      auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#')
      {
        continue;
      }
      auto last = line.find_last_not_of(" \t\r");
      std::string w = line.substr(first, last - first + 1);
      std::transform(w.begin(), w.end(), w.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      words.insert(std::move(w));
    }
    return StopwordSet(std::move(words));
  }

  static StopwordSet from_file(const std::string& path)
  {
    std::ifstream in(path);
    if (!in)
    {
      throw std::runtime_error("cannot open stopword file: " + path);
    }
    return from_stream(in);
  }

  bool contains(const std::string& w) const { return words_.count(w) != 0; }
  std::size_t size() const { return words_.size(); }

private:
  std::unordered_set<std::string> words_;
};

namespace detail
{
inline std::size_t utf8_length(std::string_view s)
{
  std::size_t n = 0;
  for (unsigned char c : s)
  {
    if ((c & 0xC0) != 0x80)
    {
      ++n;
    }
  }
  return n;
}
}  // namespace detail

/// Lowercases ASCII, strips ASCII punctuation, drops stopwords and tokens
/// shorter than two characters. Returns the multiset in sorted order.
inline std::vector<std::string> tokenize(std::string_view text, const StopwordSet& stopwords)
{
  std::vector<std::string> out;
  std::string token;
  auto flush = [&] {
    if (!token.empty() && detail::utf8_length(token) >= 2 && !stopwords.contains(token))
    {
      out.push_back(token);
    }
    token.clear();
  };
  for (char ch : text)
  {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isspace(c))
    {
      flush();
    }
    else if (c < 0x80 && std::ispunct(c))
    {
      continue;
    }
    else if (c < 0x80)
    {
      token.push_back(static_cast<char>(std::tolower(c)));
    }
    else
    {
      token.push_back(ch);
    }
  }
  flush();
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Records

enum class ParseErrorKind
{
  Malformed,
  InvalidCoordinates,
  EmptyKeywords,
};

inline const char* to_string(ParseErrorKind k)
{
  switch (k)
  {
    case ParseErrorKind::Malformed:
      return "malformed";
    case ParseErrorKind::InvalidCoordinates:
      return "invalid-coordinates";
    case ParseErrorKind::EmptyKeywords:
      return "empty-keywords";
  }
  return "unknown";
}

class ParseError : public std::runtime_error
{
public:
  ParseError(ParseErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind)
  {
  }

  ParseErrorKind kind() const { return kind_; }

private:
  ParseErrorKind kind_;
};

namespace detail
{
inline std::string id_field(const nlohmann::json& j, const char* name)
{
  auto it = j.find(name);
  if (it == j.end())
  {
    throw ParseError(ParseErrorKind::Malformed, std::string("missing field '") + name + "'");
  }
  if (it->is_string())
  {
    auto s = it->get<std::string>();
    if (s.empty())
    {
      throw ParseError(ParseErrorKind::Malformed, std::string("empty field '") + name + "'");
    }
    return s;
  }
  if (it->is_number_integer())
  {
    return std::to_string(it->get<int64_t>());
  }
  throw ParseError(ParseErrorKind::Malformed, std::string("field '") + name + "' is not an id");
}

inline double coordinate_field(const nlohmann::json& j, const char* name)
{
  auto it = j.find(name);
  if (it == j.end() || !it->is_number())
  {
    throw ParseError(ParseErrorKind::InvalidCoordinates,
                     std::string("missing or non-numeric '") + name + "'");
  }
  return it->get<double>();
}
}  // namespace detail

/// Parses one JSON Lines record: {id, user_id, timestamp, lat, lon, text}.
inline Tweet parse_record(std::string_view line, const StopwordSet& stopwords)
{
  nlohmann::json j;
  try
  {
    j = nlohmann::json::parse(line);
  }
  catch (const nlohmann::json::parse_error& e)
  {
    throw ParseError(ParseErrorKind::Malformed, e.what());
  }
  if (!j.is_object())
  {
    throw ParseError(ParseErrorKind::Malformed, "record is not an object");
  }

  Tweet t;
  t.id = detail::id_field(j, "id");
  t.user_id = detail::id_field(j, "user_id");

  auto ts = j.find("timestamp");
  if (ts == j.end() || !ts->is_number_integer())
  {
    throw ParseError(ParseErrorKind::Malformed, "timestamp must be an integer");
  }
  t.timestamp = ts->get<int64_t>();
  if (t.timestamp < 0)
  {
    throw ParseError(ParseErrorKind::Malformed, "negative timestamp");
  }

  t.location.lat = detail::coordinate_field(j, "lat");
  t.location.lon = detail::coordinate_field(j, "lon");
  if (!valid_coordinates(t.location.lat, t.location.lon))
  {
    throw ParseError(ParseErrorKind::InvalidCoordinates, "coordinates out of range");
  }

  auto text = j.find("text");
  if (text == j.end() || !text->is_string())
  {
    throw ParseError(ParseErrorKind::Malformed, "missing text");
  }
  t.keywords = tokenize(text->get_ref<const std::string&>(), stopwords);
  if (t.keywords.empty())
  {
    throw ParseError(ParseErrorKind::EmptyKeywords, "no keywords after tokenization");
  }
  return t;
}

/// Writes a record whose text is the space-joined keyword multiset, so
/// re-parsing reproduces the same Tweet.
inline std::string serialize_record(const Tweet& t)
{
  std::string text;
  for (const auto& k : t.keywords)
  {
    if (!text.empty())
    {
      text.push_back(' ');
    }
    text += k;
  }
  nlohmann::ordered_json j;
  j["id"] = t.id;
  j["user_id"] = t.user_id;
  j["timestamp"] = t.timestamp;
  j["lat"] = t.location.lat;
  j["lon"] = t.location.lon;
  j["text"] = text;
  return j.dump();
}

struct IngestStats
{
  uint64_t lines = 0;
  uint64_t comments = 0;
  uint64_t parsed = 0;
  uint64_t malformed = 0;
  uint64_t invalid_coordinates = 0;
  uint64_t empty_keywords = 0;

  friend bool operator==(const IngestStats&, const IngestStats&) = default;
};

/// Sequential reader over a stream file. Bad lines are skipped and counted.
/// Supports a one-tweet lookahead and reports a resume point (byte offset of
/// the first line not yet handed out) for persistence.
class StreamReader
{
public:
  StreamReader(std::istream& in, const StopwordSet& stopwords) : in_(&in), stopwords_(&stopwords)
  {
  }

  /// Returns the next valid tweet without consuming it.
  const Tweet* peek()
  {
    if (!pending_)
    {
      fill();
    }
    return pending_ ? &*pending_ : nullptr;
  }

  std::optional<Tweet> next()
  {
    peek();
    std::optional<Tweet> out = std::move(pending_);
    pending_.reset();
    return out;
  }

  /// Consumes every tweet with timestamp < end.
  std::vector<Tweet> take_before(Timestamp end)
  {
    std::vector<Tweet> out;
    while (const Tweet* t = peek())
    {
      if (t->timestamp >= end)
      {
        break;
      }
      out.push_back(*next());
    }
    return out;
  }

  bool exhausted()
  {
    return peek() == nullptr;
  }

  /// Offset and statistics as they were before the lookahead tweet was read.
  std::pair<int64_t, IngestStats> resume_point() const
  {
    if (pending_)
    {
      return {pending_offset_, pending_stats_};
    }
    return {offset_, stats_};
  }

  /// Seeks to a previously reported resume point.
  void restore(int64_t offset, const IngestStats& stats)
  {
    pending_.reset();
    in_->clear();
    in_->seekg(offset);
    offset_ = offset;
    stats_ = stats;
  }

  const IngestStats& stats() const { return stats_; }

  /// In follow mode a last line without its newline is left unread, since a
  /// writer may still be appending to it.
  void set_follow(bool follow) { follow_ = follow; }

  /// Clears the end-of-file state so that lines appended since can be read.
  void rearm()
  {
    if (!pending_)
    {
      in_->clear();
      in_->seekg(offset_);
    }
  }

private:
  void fill()
  {
    std::string line;
    while (true)
    {
      const int64_t line_start = offset_;
      const IngestStats before = stats_;
      if (!std::getline(*in_, line))
      {
        return;
      }
      if (follow_ && in_->eof())
      {
        in_->clear();
        in_->seekg(line_start);
        in_->setstate(std::ios::eofbit);
        return;
      }
      offset_ += static_cast<int64_t>(line.size()) + 1;
      ++stats_.lines;
      if (!line.empty() && line.back() == '\r')
      {
        line.pop_back();
      }
      if (line.find_first_not_of(" \t") == std::string::npos)
      {
        continue;
      }
      if (line[0] == '#')
      {
        ++stats_.comments;
        continue;
      }
      try
      {
        pending_ = parse_record(line, *stopwords_);
        ++stats_.parsed;
        pending_offset_ = line_start;
        pending_stats_ = before;
        return;
      }
      catch (const ParseError& e)
      {
        switch (e.kind())
        {
          case ParseErrorKind::Malformed:
            ++stats_.malformed;
            break;
          case ParseErrorKind::InvalidCoordinates:
            ++stats_.invalid_coordinates;
            break;
          case ParseErrorKind::EmptyKeywords:
            ++stats_.empty_keywords;
            break;
        }
      }
    }
  }

  std::istream* in_;
  const StopwordSet* stopwords_;
  std::optional<Tweet> pending_;
  bool follow_ = false;
  int64_t offset_ = 0;
  int64_t pending_offset_ = 0;
  IngestStats stats_;
  IngestStats pending_stats_;
};

// ---------------------------------------------------------------------------
// Sliding window

/// Tweets with start <= timestamp < end, ordered by (timestamp, id).
struct QueryWindow
{
  Timestamp start = 0;
  Timestamp end = 0;
  std::vector<TweetPtr> tweets;

  Timestamp length() const { return end - start; }
};

struct WindowDiff
{
  std::vector<TweetPtr> removed;
  std::vector<TweetPtr> inserted;

  bool empty() const { return removed.empty() && inserted.empty(); }
};

/// Shifts the window so that it covers [new_end - length, new_end).
///
/// `buffered` holds tweets not yet delivered, all with timestamp < new_end.
/// Buffered tweets that are already older than the new start never enter the
/// window and are not part of the diff.
inline std::pair<QueryWindow, WindowDiff> advance_window(const QueryWindow& window,
                                                         Timestamp new_end,
                                                         std::span<const TweetPtr> buffered)
{
  if (new_end <= window.end)
  {
    throw std::invalid_argument("advance_window: new end must be after the current end");
  }
  const Timestamp new_start = new_end - window.length();

  QueryWindow next;
  next.start = new_start;
  next.end = new_end;
  WindowDiff diff;

  for (const auto& t : window.tweets)
  {
    if (t->timestamp < new_start)
    {
      diff.removed.push_back(t);
    }
    else
    {
      next.tweets.push_back(t);
    }
  }

  for (const auto& t : buffered)
  {
    if (t->timestamp >= new_end)
    {
      throw std::invalid_argument("advance_window: buffered tweet beyond the new end");
    }
    if (t->timestamp >= new_start)
    {
      diff.inserted.push_back(t);
    }
  }
  std::sort(diff.inserted.begin(), diff.inserted.end(), TweetTimeOrder{});

  const auto mid = static_cast<std::ptrdiff_t>(next.tweets.size());
  next.tweets.insert(next.tweets.end(), diff.inserted.begin(), diff.inserted.end());
  std::inplace_merge(next.tweets.begin(), next.tweets.begin() + mid, next.tweets.end(),
                     TweetTimeOrder{});
  return {std::move(next), std::move(diff)};
}

}  // namespace radar
