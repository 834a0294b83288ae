#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "radar/candidate_generator.hpp"
#include "radar/classifier.hpp"
#include "radar/embedding.hpp"
#include "radar/event_store.hpp"
#include "radar/ingest.hpp"
#include "radar/io.hpp"
#include "radar/keyword_graph.hpp"
#include "radar/online_updater.hpp"
#include "radar/summarizer.hpp"

namespace radar
{
enum class DetectionMode
{
  Incremental,
  Batch,
  /// Incremental results, with the batch path run alongside and compared.
  Verify,
};

inline const char* to_string(DetectionMode m)
{
  switch (m)
  {
    case DetectionMode::Incremental:
      return "incremental";
    case DetectionMode::Batch:
      return "batch";
    case DetectionMode::Verify:
      return "verify";
  }
  return "?";
}

inline DetectionMode detection_mode_from(const std::string& s)
{
  if (s == "incremental")
  {
    return DetectionMode::Incremental;
  }
  if (s == "batch")
  {
    return DetectionMode::Batch;
  }
  if (s == "verify")
  {
    return DetectionMode::Verify;
  }
  throw std::invalid_argument("unknown detection mode '" + s + "'");
}

struct EngineConfig
{
  Timestamp window_s = 6 * 3600;
  Timestamp step_s = 600;
  GeneratorParams generator;
  RwrParams rwr;
  TimelineParams timeline;
  PyramidParams pyramid;
  EmbeddingParams embedding;
  FeatureParams features;
  /// Ticks between the current shift and the history snapshot it is compared
  /// against; 0 means one window length.
  int64_t history_lag_ticks = 0;
  /// Decision for candidates that have no history snapshot yet.
  bool cold_start_is_event = false;
  std::size_t top_keywords = 10;
  DetectionMode mode = DetectionMode::Incremental;

  int64_t lag_ticks() const
  {
    if (history_lag_ticks > 0)
    {
      return history_lag_ticks;
    }
    return (window_s + step_s - 1) / step_s;
  }

  /// Throws std::invalid_argument on an unusable configuration.
  void validate() const
  {
    if (window_s <= 0 || step_s <= 0 || step_s > window_s)
    {
      throw std::invalid_argument("config: need 0 < step <= window");
    }
    if (!(generator.bandwidth_m > 0.0) || !(generator.delta >= 0.0) || generator.min_support == 0)
    {
      throw std::invalid_argument("config: bad candidate generator settings");
    }
    if (!(rwr.alpha > 0.0 && rwr.alpha < 1.0) || !(rwr.epsilon > 0.0) ||
        !(rwr.max_relative_drift >= 0.0))
    {
      throw std::invalid_argument("config: bad random walk settings");
    }
    if (timeline.max_clusters == 0 || !(timeline.boundary_factor > 0.0) ||
        !(timeline.singleton_radius_m > 0.0))
    {
      throw std::invalid_argument("config: bad timeline settings");
    }
    if (pyramid.base < 2 || pyramid.level < 0)
    {
      throw std::invalid_argument("config: bad pyramid settings");
    }
    if (embedding.dimension == 0 || !(embedding.learning_rate >= 0.0))
    {
      throw std::invalid_argument("config: bad embedding settings");
    }
    if (!(features.estimation_bandwidth_m > 0.0) || !(features.burst_bandwidth_m > 0.0))
    {
      throw std::invalid_argument("config: bad feature bandwidths");
    }
    if (history_lag_ticks < 0 || top_keywords == 0)
    {
      throw std::invalid_argument("config: bad history lag or keyword limit");
    }
  }
};

inline nlohmann::ordered_json config_json(const EngineConfig& c)
{
  nlohmann::ordered_json j;
  j["window_s"] = c.window_s;
  j["step_s"] = c.step_s;
  j["bandwidth_m"] = c.generator.bandwidth_m;
  j["delta"] = c.generator.delta;
  j["min_support"] = c.generator.min_support;
  j["rwr_alpha"] = c.rwr.alpha;
  j["rwr_epsilon"] = c.rwr.epsilon;
  j["rwr_max_relative_drift"] = c.rwr.max_relative_drift;
  j["timeline_max_clusters"] = c.timeline.max_clusters;
  j["timeline_boundary_factor"] = c.timeline.boundary_factor;
  j["timeline_singleton_radius_m"] = c.timeline.singleton_radius_m;
  j["timeline_stale_age_s"] = c.timeline.stale_age_s;
  j["timeline_stale_max_size"] = c.timeline.stale_max_size;
  j["pyramid_base"] = c.pyramid.base;
  j["pyramid_level"] = c.pyramid.level;
  j["embedding_dimension"] = c.embedding.dimension;
  j["embedding_negatives"] = c.embedding.negatives;
  j["embedding_learning_rate"] = c.embedding.learning_rate;
  j["embedding_min_rate_fraction"] = c.embedding.min_rate_fraction;
  j["embedding_decay_steps"] = c.embedding.decay_steps;
  j["embedding_cache_size"] = c.embedding.cache_size;
  j["embedding_replay_ratio"] = c.embedding.replay_ratio;
  j["embedding_clip_norm"] = c.embedding.clip_norm;
  j["embedding_seed"] = c.embedding.seed;
  j["estimation_bandwidth_m"] = c.features.estimation_bandwidth_m;
  j["burst_bandwidth_m"] = c.features.burst_bandwidth_m;
  j["history_lag_ticks"] = c.history_lag_ticks;
  j["cold_start_is_event"] = c.cold_start_is_event;
  j["top_keywords"] = c.top_keywords;
  j["mode"] = to_string(c.mode);
  return j;
}

inline EngineConfig config_from_json(const nlohmann::json& j)
{
  EngineConfig c;
  const auto get = [&](const char* key, auto& field) {
    if (auto it = j.find(key); it != j.end())
    {
      it->get_to(field);
    }
  };
  get("window_s", c.window_s);
  get("step_s", c.step_s);
  get("bandwidth_m", c.generator.bandwidth_m);
  get("delta", c.generator.delta);
  get("min_support", c.generator.min_support);
  get("rwr_alpha", c.rwr.alpha);
  get("rwr_epsilon", c.rwr.epsilon);
  get("rwr_max_relative_drift", c.rwr.max_relative_drift);
  get("timeline_max_clusters", c.timeline.max_clusters);
  get("timeline_boundary_factor", c.timeline.boundary_factor);
  get("timeline_singleton_radius_m", c.timeline.singleton_radius_m);
  get("timeline_stale_age_s", c.timeline.stale_age_s);
  get("timeline_stale_max_size", c.timeline.stale_max_size);
  get("pyramid_base", c.pyramid.base);
  get("pyramid_level", c.pyramid.level);
  get("embedding_dimension", c.embedding.dimension);
  get("embedding_negatives", c.embedding.negatives);
  get("embedding_learning_rate", c.embedding.learning_rate);
  get("embedding_min_rate_fraction", c.embedding.min_rate_fraction);
  get("embedding_decay_steps", c.embedding.decay_steps);
  get("embedding_cache_size", c.embedding.cache_size);
  get("embedding_replay_ratio", c.embedding.replay_ratio);
  get("embedding_clip_norm", c.embedding.clip_norm);
  get("embedding_seed", c.embedding.seed);
  get("estimation_bandwidth_m", c.features.estimation_bandwidth_m);
  get("burst_bandwidth_m", c.features.burst_bandwidth_m);
  get("history_lag_ticks", c.history_lag_ticks);
  get("cold_start_is_event", c.cold_start_is_event);
  get("top_keywords", c.top_keywords);
  if (auto it = j.find("mode"); it != j.end())
  {
    c.mode = detection_mode_from(it->get<std::string>());
  }
  c.validate();
  return c;
}

struct CandidateDecision
{
  CandidateEvent candidate;
  std::optional<FeatureVector> features;  // empty on cold start
  Decision decision;
};

struct ShiftReport
{
  int64_t tick = 0;
  Timestamp window_start = 0;
  Timestamp window_end = 0;
  std::size_t window_size = 0;
  std::size_t removed = 0;
  std::size_t inserted = 0;
  std::size_t late = 0;
  std::size_t duplicates = 0;
  std::vector<CandidateDecision> decisions;
  std::size_t events = 0;
  /// Clustering stage only: updater shift for the incremental path,
  /// pivot seeking plus grouping for the batch path. NaN when not run.
  double incremental_ms = std::numeric_limits<double>::quiet_NaN();
  double batch_ms = std::numeric_limits<double>::quiet_NaN();
  double total_ms = 0.0;
  UpdateStats update;
  /// Verify mode: whether pivots, memberships, candidates and labels agreed.
  std::optional<bool> batch_agrees;

  double churn() const
  {
    return window_size == 0 ? 0.0
                            : static_cast<double>(removed + inserted) / static_cast<double>(window_size);
  }
};

struct LatencyStats
{
  uint64_t count = 0;
  double last_ms = 0.0;
  double total_ms = 0.0;
  double max_ms = 0.0;

  void add(double ms)
  {
    ++count;
    last_ms = ms;
    total_ms += ms;
    max_ms = std::max(max_ms, ms);
  }

  double mean_ms() const { return count == 0 ? 0.0 : total_ms / static_cast<double>(count); }
};

struct EngineStatus
{
  bool started = false;
  int64_t tick = 0;
  Timestamp window_start = 0;
  Timestamp window_end = 0;
  std::size_t window_tweets = 0;
  std::size_t last_candidates = 0;
  std::size_t last_events = 0;
  std::size_t stored_events = 0;
  uint64_t late = 0;
  uint64_t duplicates = 0;
  std::string mode;
  LatencyStats latency;
};

inline nlohmann::ordered_json status_json(const EngineStatus& s)
{
  nlohmann::ordered_json j;
  j["started"] = s.started;
  j["tick"] = s.tick;
  j["window"] = {{"start", s.window_start}, {"end", s.window_end}, {"tweets", s.window_tweets}};
  j["counts"] = {{"candidates", s.last_candidates},
                 {"events_last_shift", s.last_events},
                 {"events_stored", s.stored_events},
                 {"late", s.late},
                 {"duplicates", s.duplicates}};
  j["mode"] = s.mode;
  j["shift_latency_ms"] = {{"count", s.latency.count},
                           {"last", s.latency.last_ms},
                           {"mean", s.latency.mean_ms()},
                           {"max", s.latency.max_ms}};
  return j;
}

inline constexpr int kStateVersion = 1;

/// Sealed persistence of a trained classifier.
inline void save_classifier(const std::string& path, const LogisticModel& model)
{
  std::ostringstream body;
  model.write(body);
  write_file(path, seal_state("classifier", kStateVersion, body.str()));
}

inline LogisticModel load_classifier(const std::string& path)
{
  std::istringstream in(unseal_state("classifier", kStateVersion, read_file(path)));
  auto model = LogisticModel::read(in);
  if (model.feature_count() != kFeatureCount)
  {
    throw CorruptStateError("classifier has the wrong number of features");
  }
  return model;
}

/// The detection loop over one stream: window, keyword graph, timeline,
/// embedding, clustering and classification, plus the event store.
class Engine
{
public:
  explicit Engine(EngineConfig config = {})
      : config_((config.validate(), config)),
        semantics_(config_.rwr),
        timeline_(config_.timeline, config_.pyramid),
        embedding_(config_.embedding),
        classifier_(kFeatureCount),
        updater_(config_.generator)
  {
  }

  const EngineConfig& config() const { return config_; }
  const QueryWindow& window() const { return window_; }
  int64_t tick() const { return tick_; }
  bool started() const { return started_; }
  const SemanticIndex& semantics() const { return semantics_; }
  const ActivityTimeline& timeline() const { return timeline_; }
  const EmbeddingModel& embedding() const { return embedding_; }
  const LogisticModel& classifier() const { return classifier_; }
  const OnlineUpdater& updater() const { return updater_; }
  const EventStore& events() const { return events_; }

  void set_classifier(LogisticModel model)
  {
    if (model.feature_count() != kFeatureCount)
    {
      throw std::invalid_argument("classifier has the wrong number of features");
    }
    classifier_ = std::move(model);
  }

  /// Adds earlier tweets to the keyword graph only, as a restored
  /// whole-history graph would hold them. Call between shifts.
  void observe_history(std::span<const Tweet> tweets)
  {
    for (const auto& t : tweets)
    {
      semantics_.observe(t.keywords);
    }
  }

  /// Places the empty window so that it ends at `origin`.
  void start(Timestamp origin)
  {
    if (started_)
    {
      throw std::logic_error("engine already started");
    }
    window_ = QueryWindow{origin - config_.window_s, origin, {}};
    started_ = true;
  }

  Timestamp next_end() const { return window_.end + config_.step_s; }

  /// Advances the window to `new_end` with the tweets that arrived since the
  /// previous shift, and returns what was detected.
  ShiftReport shift(Timestamp new_end, const std::vector<Tweet>& arrivals)
  {
    if (!started_)
    {
      throw std::logic_error("engine not started");
    }
    const auto shift_begin = std::chrono::steady_clock::now();
    ShiftReport report;

    std::vector<TweetPtr> buffered;
    std::unordered_set<std::string> batch_ids;
    for (const auto& t : arrivals)
    {
      if (window_ids_.count(t.id) || !batch_ids.insert(t.id).second)
      {
        ++report.duplicates;
        continue;
      }
      if (t.timestamp < new_end - config_.window_s)
      {
        ++report.late;
      }
      buffered.push_back(std::make_shared<const Tweet>(t));
    }

    auto [next, diff] = advance_window(window_, new_end, buffered);
    window_ = std::move(next);
    for (const auto& t : diff.removed)
    {
      window_ids_.erase(t->id);
    }
    std::vector<std::vector<std::string>> texts;
    texts.reserve(diff.inserted.size());
    for (const auto& t : diff.inserted)
    {
      window_ids_.insert(t->id);
      semantics_.observe(t->keywords);
      timeline_.update(*t);
      texts.push_back(t->keywords);
    }
    if (!texts.empty())
    {
      embedding_.train(texts);
    }
    const auto refreshed = semantics_.sync(window_keyword_ids());

    std::vector<CandidateEvent> candidates;
    std::optional<AuthorityState> batch;
    if (config_.mode != DetectionMode::Batch)
    {
      const auto t0 = std::chrono::steady_clock::now();
      report.update = updater_.shift(diff, refreshed, semantics_);
      candidates = updater_.candidates(new_end);
      report.incremental_ms = elapsed_ms(t0);
    }
    if (config_.mode != DetectionMode::Incremental)
    {
      const auto t0 = std::chrono::steady_clock::now();
      batch = seek_pivots(window_.tweets, semantics_, config_.generator);
      auto batch_candidates = form_candidates(*batch, config_.generator.min_support, new_end);
      report.batch_ms = elapsed_ms(t0);
      if (config_.mode == DetectionMode::Batch)
      {
        candidates = std::move(batch_candidates);
      }
      else
      {
        report.batch_agrees =
            updater_.view() == view_of(*batch) && candidates == batch_candidates;
      }
    }

    ++tick_;
    timeline_.snapshot(tick_, new_end);

    report.decisions = classify(candidates);
    if (report.batch_agrees && *report.batch_agrees)
    {
      const auto batch_decisions =
          classify(form_candidates(*batch, config_.generator.min_support, new_end));
      for (std::size_t i = 0; i < batch_decisions.size(); ++i)
      {
        const auto& a = report.decisions[i].decision;
        const auto& b = batch_decisions[i].decision;
        if (a.is_event != b.is_event || a.probability != b.probability)
        {
          report.batch_agrees = false;
        }
      }
    }
    for (const auto& d : report.decisions)
    {
      if (d.decision.is_event)
      {
        events_.put(record_of(d));
        ++report.events;
      }
    }

    report.tick = tick_;
    report.window_start = window_.start;
    report.window_end = window_.end;
    report.window_size = window_.tweets.size();
    report.removed = diff.removed.size();
    report.inserted = diff.inserted.size();
    report.total_ms = elapsed_ms(shift_begin);

    late_ += report.late;
    duplicates_ += report.duplicates;
    last_candidates_ = report.decisions.size();
    last_events_ = report.events;
    latency_.add(report.total_ms);
    return report;
  }

  EngineStatus status() const
  {
    EngineStatus s;
    s.started = started_;
    s.tick = tick_;
    s.window_start = window_.start;
    s.window_end = window_.end;
    s.window_tweets = window_.tweets.size();
    s.last_candidates = last_candidates_;
    s.last_events = last_events_;
    s.stored_events = events_.size();
    s.late = late_;
    s.duplicates = duplicates_;
    s.mode = to_string(config_.mode);
    s.latency = latency_;
    return s;
  }

  /// Writes one sealed file per module into `dir`, creating it if needed.
  void save(const std::string& dir) const
  {
    std::filesystem::create_directories(dir);
    const auto sealed = [&](const char* kind, auto&& body_of) {
      std::ostringstream body;
      body_of(body);
      write_file(path_in(dir, kind), seal_state(kind, kStateVersion, body.str()));
    };
    sealed("keywords", [&](std::ostream& out) {
      semantics_.graph().write(out);
      semantics_.write_cache(out);
    });
    sealed("timeline", [&](std::ostream& out) { timeline_.write(out); });
    sealed("embedding", [&](std::ostream& out) { embedding_.write(out); });
    sealed("classifier", [&](std::ostream& out) { classifier_.write(out); });
    sealed("events", [&](std::ostream& out) { events_.write(out); });
    sealed("engine", [&](std::ostream& out) {
      out << config_json(config_).dump() << "\n";
      out << "started " << (started_ ? 1 : 0) << "\n";
      out << "tick " << tick_ << "\n";
      out << "window " << window_.start << " " << window_.end << "\n";
      out << "counters " << late_ << " " << duplicates_ << " " << last_candidates_ << " "
          << last_events_ << "\n";
      out << "tweets " << window_.tweets.size() << "\n";
      for (const auto& t : window_.tweets)
      {
        out << tweet_json(*t).dump() << "\n";
      }
    });
  }

  /// Reconstructs an engine saved by `save`; the clustering state is rebuilt
  /// from the restored window.
  static Engine load(const std::string& dir)
  {
    std::istringstream engine_in(unseal(dir, "engine"));
    std::string line;
    std::getline(engine_in, line);
    EngineConfig config;
    try
    {
      config = config_from_json(nlohmann::json::parse(line));
    }
    catch (const nlohmann::json::exception& e)
    {
      throw CorruptStateError(std::string("bad engine config: ") + e.what());
    }
    catch (const std::invalid_argument& e)
    {
      throw CorruptStateError(std::string("bad engine config: ") + e.what());
    }
    Engine engine(config);

    expect_keyword(engine_in, "started");
    engine.started_ = parse_number<int>(expect_token(engine_in, "started")) != 0;
    expect_keyword(engine_in, "tick");
    engine.tick_ = parse_number<int64_t>(expect_token(engine_in, "tick"));
    expect_keyword(engine_in, "window");
    engine.window_.start = parse_number<Timestamp>(expect_token(engine_in, "window start"));
    engine.window_.end = parse_number<Timestamp>(expect_token(engine_in, "window end"));
    if (engine.window_.end - engine.window_.start != config.window_s)
    {
      throw CorruptStateError("window length does not match the configuration");
    }
    expect_keyword(engine_in, "counters");
    engine.late_ = parse_number<uint64_t>(expect_token(engine_in, "late"));
    engine.duplicates_ = parse_number<uint64_t>(expect_token(engine_in, "duplicates"));
    engine.last_candidates_ = parse_number<std::size_t>(expect_token(engine_in, "candidates"));
    engine.last_events_ = parse_number<std::size_t>(expect_token(engine_in, "events"));
    expect_keyword(engine_in, "tweets");
    const auto n = parse_number<std::size_t>(expect_token(engine_in, "tweet count"));
    std::getline(engine_in, line);
    for (std::size_t i = 0; i < n; ++i)
    {
      if (!std::getline(engine_in, line))
      {
        throw CorruptStateError("engine state truncated");
      }
      try
      {
        engine.window_.tweets.push_back(std::make_shared<const Tweet>(tweet_from_json(line)));
      }
      catch (const nlohmann::json::exception& e)
      {
        throw CorruptStateError(std::string("bad window tweet: ") + e.what());
      }
      engine.window_ids_.insert(engine.window_.tweets.back()->id);
    }

    std::istringstream keywords_in(unseal(dir, "keywords"));
    engine.semantics_.mutable_graph() = KeywordGraph::read(keywords_in);
    engine.semantics_.read_cache(keywords_in);

    std::istringstream timeline_in(unseal(dir, "timeline"));
    engine.timeline_.read(timeline_in);

    std::istringstream embedding_in(unseal(dir, "embedding"));
    engine.embedding_ = EmbeddingModel::read(embedding_in, config.embedding);

    std::istringstream classifier_in(unseal(dir, "classifier"));
    engine.set_classifier(LogisticModel::read(classifier_in));

    std::istringstream events_in(unseal(dir, "events"));
    engine.events_ = EventStore::read(events_in);

    if (config.mode != DetectionMode::Batch)
    {
      engine.updater_.rebuild(engine.window_.tweets, engine.semantics_);
    }
    return engine;
  }

  static std::string path_in(const std::string& dir, const std::string& kind)
  {
    return (std::filesystem::path(dir) / (kind + ".state")).string();
  }

private:
  static double elapsed_ms(std::chrono::steady_clock::time_point since)
  {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since)
        .count();
  }

  static std::string unseal(const std::string& dir, const char* kind)
  {
    return unseal_state(kind, kStateVersion, read_file(path_in(dir, kind)));
  }

  static Tweet tweet_from_json(const std::string& line)
  {
    const auto j = nlohmann::json::parse(line);
    Tweet t;
    t.id = j.at("id").get<std::string>();
    t.user_id = j.at("user_id").get<std::string>();
    t.timestamp = j.at("timestamp").get<Timestamp>();
    t.location = {j.at("lat").get<double>(), j.at("lon").get<double>()};
    t.keywords = j.at("keywords").get<std::vector<std::string>>();
    return t;
  }

  std::vector<KeywordId> window_keyword_ids() const
  {
    std::vector<KeywordId> out;
    for (const auto& t : window_.tweets)
    {
      auto ids = semantics_.ids_of(t->keywords);
      out.insert(out.end(), ids.begin(), ids.end());
    }
    return out;
  }

  /// The snapshot one lag behind the current tick.
  const TimelineSnapshot& history() const
  {
    const int64_t at = tick_ - config_.lag_ticks();
    if (at < 1)
    {
      throw MissingHistoryError("no snapshot before the current window yet");
    }
    try
    {
      return timeline_.retrieve(at);
    }
    catch (const std::out_of_range&)
    {
      throw MissingHistoryError("no retained snapshot at or before tick " + std::to_string(at));
    }
  }

  std::vector<CandidateDecision> classify(std::vector<CandidateEvent> candidates) const
  {
    std::vector<CandidateDecision> out;
    if (candidates.empty())
    {
      return out;
    }
    const TimelineSnapshot* snapshot = nullptr;
    try
    {
      snapshot = &history();
    }
    catch (const MissingHistoryError&)
    {
    }
    std::optional<WindowContext> context;
    if (snapshot)
    {
      context = make_window_context(window_.tweets, embedding_, config_.features);
    }
    out.reserve(candidates.size());
    for (auto& c : candidates)
    {
      CandidateDecision d;
      if (snapshot)
      {
        d.features = extract_features(c, *snapshot, embedding_, *context, config_.features);
        d.decision = classifier_.classify(*d.features);
      }
      else
      {
        d.decision = Decision{config_.cold_start_is_event ? 1.0 : 0.0, config_.cold_start_is_event};
      }
      d.candidate = std::move(c);
      out.push_back(std::move(d));
    }
    return out;
  }

  EventRecord record_of(const CandidateDecision& d) const
  {
    EventRecord e;
    e.event_id = "ev-" + d.candidate.pivot->id;
    e.location = d.candidate.pivot->location;
    e.first_seen = std::numeric_limits<Timestamp>::max();
    e.last_seen = std::numeric_limits<Timestamp>::min();
    for (const auto& m : d.candidate.members)
    {
      e.first_seen = std::min(e.first_seen, m->timestamp);
      e.last_seen = std::max(e.last_seen, m->timestamp);
      e.members.push_back(*m);
    }
    e.top_keywords = top_keywords(e.members, config_.top_keywords);
    e.score = d.decision.probability;
    e.detected_at = d.candidate.created_at;
    return e;
  }

  EngineConfig config_;
  SemanticIndex semantics_;
  ActivityTimeline timeline_;
  EmbeddingModel embedding_;
  LogisticModel classifier_;
  OnlineUpdater updater_;
  EventStore events_;
  QueryWindow window_;
  std::unordered_set<std::string> window_ids_;
  bool started_ = false;
  int64_t tick_ = 0;
  uint64_t late_ = 0;
  uint64_t duplicates_ = 0;
  std::size_t last_candidates_ = 0;
  std::size_t last_events_ = 0;
  LatencyStats latency_;
};

/// Reads only the event store out of a state directory written by Engine::save.
inline EventStore load_event_store(const std::string& dir)
{
  std::istringstream in(
      unseal_state("events", kStateVersion, read_file(Engine::path_in(dir, "events"))));
  return EventStore::read(in);
}

/// Replays a stream file through an engine on a fixed step schedule. The
/// empty starting window ends at the step boundary at or before the first tweet.
class Pipeline
{
public:
  Pipeline(const std::string& stream_path, Engine engine, StopwordSet stopwords = {})
      : in_(std::make_unique<std::ifstream>(stream_path, std::ios::binary)),
        stopwords_(std::make_unique<StopwordSet>(std::move(stopwords))),
        reader_(std::make_unique<StreamReader>(*in_, *stopwords_)),
        engine_(std::move(engine))
  {
    if (!*in_)
    {
      throw std::runtime_error("cannot read stream " + stream_path);
    }
  }

  Engine& engine() { return engine_; }
  const Engine& engine() const { return engine_; }
  const IngestStats& ingest_stats() const { return reader_->stats(); }

  /// True once every tweet of the stream has been handed to the engine.
  bool done() { return reader_->exhausted(); }

  /// Runs one shift; nullopt when the stream has nothing left.
  std::optional<ShiftReport> step()
  {
    if (!engine_.started())
    {
      const Tweet* first = reader_->peek();
      if (!first)
      {
        return std::nullopt;
      }
      engine_.start(origin_for(first->timestamp));
    }
    else if (reader_->exhausted())
    {
      return std::nullopt;
    }
    const Timestamp end = engine_.next_end();
    return engine_.shift(end, reader_->take_before(end));
  }

  /// Follow mode: reads what has been appended so far and shifts only once a
  /// tweet at or past the next step boundary has been read. Returns nullopt
  /// when it has to wait for more input.
  std::optional<ShiftReport> step_following()
  {
    reader_->set_follow(true);
    reader_->rearm();
    if (!engine_.started())
    {
      const Tweet* first = reader_->peek();
      if (!first)
      {
        return std::nullopt;
      }
      engine_.start(origin_for(first->timestamp));
    }
    const Timestamp end = engine_.next_end();
    if (held_.empty())
    {
      held_resume_ = reader_->resume_point();
    }
    for (auto& t : reader_->take_before(end))
    {
      held_.push_back(std::move(t));
    }
    if (!reader_->peek())
    {
      return std::nullopt;
    }
    auto report = engine_.shift(end, held_);
    held_.clear();
    return report;
  }

  /// Runs until the stream is exhausted or `max_shifts` shifts have run.
  template <typename Fn>
  std::size_t run(std::optional<std::size_t> max_shifts, Fn&& on_shift)
  {
    std::size_t n = 0;
    while (!max_shifts || n < *max_shifts)
    {
      auto report = step();
      if (!report)
      {
        break;
      }
      ++n;
      on_shift(*report);
    }
    return n;
  }

  /// Engine state plus the stream cursor.
  void save(const std::string& dir) const
  {
    engine_.save(dir);
    const auto [offset, stats] = held_.empty() ? reader_->resume_point() : held_resume_;
    std::ostringstream body;
    body << "offset " << offset << "\n";
    body << "stats " << stats.lines << " " << stats.comments << " " << stats.parsed << " "
         << stats.malformed << " " << stats.invalid_coordinates << " " << stats.empty_keywords
         << "\n";
    write_file(Engine::path_in(dir, "cursor"), seal_state("cursor", kStateVersion, body.str()));
  }

  static Pipeline load(const std::string& dir, const std::string& stream_path,
                       StopwordSet stopwords = {})
  {
    Pipeline p(stream_path, Engine::load(dir), std::move(stopwords));
    std::istringstream in(
        unseal_state("cursor", kStateVersion, read_file(Engine::path_in(dir, "cursor"))));
    expect_keyword(in, "offset");
    const auto offset = parse_number<int64_t>(expect_token(in, "offset"));
    expect_keyword(in, "stats");
    IngestStats stats;
    for (uint64_t* field : {&stats.lines, &stats.comments, &stats.parsed, &stats.malformed,
                            &stats.invalid_coordinates, &stats.empty_keywords})
    {
      *field = parse_number<uint64_t>(expect_token(in, "ingest counter"));
    }
    p.reader_->restore(offset, stats);
    return p;
  }

private:
  Timestamp origin_for(Timestamp first) const
  {
    const Timestamp step = engine_.config().step_s;
    return first - (((first % step) + step) % step);
  }

  std::unique_ptr<std::ifstream> in_;
  std::unique_ptr<StopwordSet> stopwords_;
  std::unique_ptr<StreamReader> reader_;
  Engine engine_;
  std::vector<Tweet> held_;
  std::pair<int64_t, IngestStats> held_resume_;
};

}  // namespace radar
