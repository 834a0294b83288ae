#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "radar/engine.hpp"
#include "radar/http_api.hpp"
#include "radar/synthetic.hpp"
#include "radar/training.hpp"

namespace
{
std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

struct Options
{
  std::string stream;
  std::string stopwords;
  std::string model;
  std::string mode = "incremental";
  std::string state;
  std::string prime;
  double window_hours = 6.0;
  double step_minutes = 10.0;
  std::optional<double> bandwidth_m;
  std::optional<double> delta;
  std::optional<std::size_t> min_support;
  std::optional<int64_t> history_lag;
  bool cold_start_is_event = false;
  std::optional<std::size_t> shifts;
  std::optional<int> serve;
  std::string host = "127.0.0.1";
  std::string static_dir;
  bool follow = false;
  double poll_seconds = 1.0;
  bool quiet = false;
};

radar::StopwordSet stopwords_of(const Options& o)
{
  return o.stopwords.empty() ? radar::StopwordSet{} : radar::StopwordSet::from_file(o.stopwords);
}

radar::EngineConfig config_of(const Options& o)
{
  radar::EngineConfig c;
  c.window_s = static_cast<radar::Timestamp>(o.window_hours * 3600.0);
  c.step_s = static_cast<radar::Timestamp>(o.step_minutes * 60.0);
  if (o.bandwidth_m)
  {
    c.generator.bandwidth_m = *o.bandwidth_m;
  }
  if (o.delta)
  {
    c.generator.delta = *o.delta;
  }
  if (o.min_support)
  {
    c.generator.min_support = *o.min_support;
  }
  if (o.history_lag)
  {
    c.history_lag_ticks = *o.history_lag;
  }
  c.cold_start_is_event = o.cold_start_is_event;
  c.mode = radar::detection_mode_from(o.mode);
  c.validate();
  return c;
}

std::vector<radar::Tweet> read_all(const std::string& path, const radar::StopwordSet& stopwords)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
  {
    throw std::runtime_error("cannot read " + path);
  }
  radar::StreamReader reader(in, stopwords);
  std::vector<radar::Tweet> out;
  while (auto t = reader.next())
  {
    out.push_back(std::move(*t));
  }
  return out;
}

radar::Engine fresh_engine(const Options& o, radar::EngineConfig config)
{
  radar::Engine engine(config);
  if (!o.model.empty())
  {
    engine.set_classifier(radar::load_classifier(o.model));
  }
  else if (!o.quiet)
  {
    std::cerr << "radar: no --model given; the untrained classifier scores every candidate 0.5\n";
  }
  if (!o.prime.empty())
  {
    const auto history = read_all(o.prime, stopwords_of(o));
    engine.observe_history(history);
  }
  return engine;
}

void print_shift(const radar::ShiftReport& r)
{
  std::printf("tick %lld window [%lld, %lld) tweets %zu +%zu -%zu candidates %zu events %zu %.1f ms\n",
              static_cast<long long>(r.tick), static_cast<long long>(r.window_start),
              static_cast<long long>(r.window_end), r.window_size, r.inserted, r.removed,
              r.decisions.size(), r.events, r.total_ms);
  std::fflush(stdout);
}

/// Drives a pipeline until the stream ends, the shift limit is hit or the
/// process is interrupted; publishes after every shift when serving.
void drive(radar::Pipeline& pipeline, const Options& o)
{
  radar::Publisher publisher;
  std::optional<radar::HttpService> service;
  if (o.serve)
  {
    std::optional<std::string> dir;
    if (!o.static_dir.empty())
    {
      dir = o.static_dir;
    }
    service.emplace(publisher, dir);
    const int port = service->start(o.host, *o.serve);
    std::cerr << "radar: serving on http://" << o.host << ":" << port << "\n";
  }
  publisher.publish(radar::snapshot_of(pipeline.engine(), pipeline.ingest_stats()));

  std::size_t n = 0;
  while (!g_interrupted && (!o.shifts || n < *o.shifts))
  {
    auto report = o.follow ? pipeline.step_following() : pipeline.step();
    if (!report)
    {
      if (!o.follow)
      {
        break;
      }
      std::this_thread::sleep_for(std::chrono::duration<double>(o.poll_seconds));
      continue;
    }
    ++n;
    if (!o.quiet)
    {
      print_shift(*report);
    }
    if (service)
    {
      publisher.publish(radar::snapshot_of(pipeline.engine(), pipeline.ingest_stats()));
    }
  }
  const auto& s = pipeline.ingest_stats();
  std::cerr << "radar: " << n << " shifts, " << pipeline.engine().events().size()
            << " events stored; ingest parsed " << s.parsed << ", malformed " << s.malformed
            << ", invalid coordinates " << s.invalid_coordinates << ", empty keywords "
            << s.empty_keywords << "\n";
  if (service && !g_interrupted)
  {
    std::cerr << "radar: stream finished, still serving; interrupt to stop\n";
    while (!g_interrupted)
    {
      std::this_thread::sleep_for(std::chrono::milliseconds(200));
    }
  }
}

void require(const std::string& value, const char* flag)
{
  if (value.empty())
  {
    throw CLI::RequiredError(flag);
  }
}

void cmd_run(const Options& o)
{
  require(o.stream, "--stream");
  radar::Pipeline pipeline(o.stream, fresh_engine(o, config_of(o)), stopwords_of(o));
  drive(pipeline, o);
  if (!o.state.empty())
  {
    pipeline.save(o.state);
    std::cerr << "radar: state saved to " << o.state << "\n";
  }
}

void cmd_load(const Options& o)
{
  require(o.state, "--state");
  require(o.stream, "--stream");
  auto pipeline = radar::Pipeline::load(o.state, o.stream, stopwords_of(o));
  if (!o.model.empty())
  {
    pipeline.engine().set_classifier(radar::load_classifier(o.model));
  }
  std::cerr << "radar: resumed at tick " << pipeline.engine().tick() << " with "
            << pipeline.engine().events().size() << " stored events\n";
  drive(pipeline, o);
  pipeline.save(o.state);
  std::cerr << "radar: state saved to " << o.state << "\n";
}

void cmd_bench(Options o)
{
  require(o.stream, "--stream");
  o.mode = "verify";
  radar::Pipeline pipeline(o.stream, fresh_engine(o, config_of(o)), stopwords_of(o));
  std::printf("tick,window_tweets,removed,inserted,churn,incremental_ms,batch_ms,agree\n");
  std::size_t disagreements = 0;
  pipeline.run(o.shifts, [&](const radar::ShiftReport& r) {
    const bool agree = r.batch_agrees.value_or(false);
    disagreements += agree ? 0 : 1;
    std::printf("%lld,%zu,%zu,%zu,%.4f,%.3f,%.3f,%d\n", static_cast<long long>(r.tick),
                r.window_size, r.removed, r.inserted, r.churn(), r.incremental_ms, r.batch_ms,
                agree ? 1 : 0);
  });
  if (disagreements > 0)
  {
    throw std::runtime_error(std::to_string(disagreements) + " shifts disagreed with batch");
  }
}

struct QueryOptions
{
  std::optional<radar::Timestamp> from;
  std::optional<radar::Timestamp> to;
  std::optional<std::string> keyword;
  std::optional<double> lat;
  std::optional<double> lon;
  std::optional<double> radius_m;
  std::string id;
};

void cmd_query(const Options& o, const QueryOptions& q)
{
  require(o.state, "--state");
  const auto store = radar::load_event_store(o.state);
  if (!q.id.empty())
  {
    const auto* e = store.find(q.id);
    if (!e)
    {
      throw std::runtime_error("no event '" + q.id + "'");
    }
    std::cout << radar::event_json(*e, true).dump(2) << "\n";
    return;
  }
  radar::EventQuery query;
  if (q.from)
  {
    query.from = *q.from;
  }
  if (q.to)
  {
    query.to = *q.to;
  }
  query.keyword = q.keyword;
  query.lat = q.lat;
  query.lon = q.lon;
  query.radius_m = q.radius_m;
  query.validate();
  for (const auto& e : store.query(query))
  {
    std::cout << radar::event_json(e, false).dump() << "\n";
  }
}

struct GenerateOptions
{
  radar::SyntheticParams params;
  double hours = 36.0;
  std::string out;
  std::string truth;
};

void cmd_generate(GenerateOptions g)
{
  require(g.out, "--out");
  g.params.duration_s = static_cast<radar::Timestamp>(g.hours * 3600.0);
  const auto stream = radar::generate_stream(g.params);
  std::ofstream out(g.out, std::ios::binary);
  stream.write_stream(out);
  if (!out)
  {
    throw std::runtime_error("cannot write " + g.out);
  }
  if (!g.truth.empty())
  {
    std::ofstream truth(g.truth, std::ios::binary);
    stream.write_truth(truth);
  }
  std::cerr << "radar: wrote " << stream.tweets.size() << " tweets with " << stream.bursts.size()
            << " planted bursts to " << g.out << "\n";
}

struct TrainOptions
{
  std::string instances;
  std::string write_instances;
  uint64_t seed = 101;
  std::string out;
  radar::TrainParams train;
};

void cmd_train(Options o, const TrainOptions& t)
{
  require(t.out, "--out");
  std::vector<radar::LabeledInstance> instances;
  if (!t.instances.empty())
  {
    std::ifstream in(t.instances);
    if (!in)
    {
      throw std::runtime_error("cannot read " + t.instances);
    }
    instances = radar::read_instances(in);
  }
  else
  {
    radar::SyntheticParams p;
    p.seed = t.seed;
    p.id_prefix = "train";
    const auto stream = radar::generate_stream(p);
    const auto path =
        (std::filesystem::temp_directory_path() / ("radar-train-" + std::to_string(t.seed) + ".jsonl"))
            .string();
    {
      std::ofstream out(path, std::ios::binary);
      stream.write_stream(out);
    }
    o.model.clear();
    o.quiet = true;
    radar::Pipeline pipeline(path, fresh_engine(o, config_of(o)), stopwords_of(o));
    instances = radar::planted_instances(pipeline, stream);
    std::filesystem::remove(path);
  }
  if (!t.write_instances.empty())
  {
    std::ofstream out(t.write_instances);
    radar::write_instances(out, instances);
  }
  const auto model = radar::train_classifier(instances, t.train);
  std::size_t correct = 0;
  std::size_t positives = 0;
  for (const auto& inst : instances)
  {
    correct += model.classify(std::span<const double>(inst.features)).is_event == inst.label;
    positives += inst.label;
  }
  radar::save_classifier(t.out, model);
  std::cerr << "radar: trained on " << instances.size() << " instances (" << positives
            << " positive), training accuracy "
            << static_cast<double>(correct) / static_cast<double>(instances.size()) << "\n";
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Local event detection over geo-tagged tweet streams"};
  app.fallthrough();
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with option values")->envname("RADAR_CONFIG");

  Options o;
  app.add_option("--stream", o.stream, "JSON-lines tweet stream");
  app.add_option("--stopwords", o.stopwords, "Stopword file, one word per line");
  app.add_option("--window-hours", o.window_hours, "Sliding window length")->capture_default_str();
  app.add_option("--step-minutes", o.step_minutes, "Shift step")->capture_default_str();
  app.add_option("--bandwidth-m", o.bandwidth_m, "Geographic kernel bandwidth in meters");
  app.add_option("--delta", o.delta, "Semantic similarity threshold");
  app.add_option("--min-support", o.min_support, "Minimum candidate size");
  app.add_option("--history-lag", o.history_lag, "Ticks back to the history snapshot (0: one window)");
  app.add_flag("--cold-start-events", o.cold_start_is_event,
               "Report candidates without a history snapshot as events");
  app.add_option("--model", o.model, "Trained classifier file");
  app.add_option("--mode", o.mode, "incremental, batch or verify")
      ->check(CLI::IsMember({"incremental", "batch", "verify"}))
      ->capture_default_str();
  app.add_option("--state", o.state, "State directory");
  app.add_option("--prime", o.prime, "Stream whose tweets seed the keyword graph before the run");
  app.add_option("--shifts", o.shifts, "Stop after this many shifts");
  app.add_option("--serve", o.serve, "Serve the HTTP API on this port (0: any free port)");
  app.add_option("--host", o.host, "Address to bind")->capture_default_str();
  app.add_option("--static", o.static_dir, "Directory served as static files");
  app.add_flag("--follow", o.follow, "Keep reading as the stream file grows");
  app.add_option("--poll-seconds", o.poll_seconds, "Follow-mode polling interval")
      ->capture_default_str();
  app.add_flag("--quiet", o.quiet, "No per-shift output");

  auto* run = app.add_subcommand("run", "Replay or follow a stream and detect events");
  auto* save = app.add_subcommand("save", "Run a stream and save the state to --state");
  auto* load = app.add_subcommand("load", "Resume from --state, continue the stream and save back");
  auto* bench = app.add_subcommand("bench", "Per-shift incremental vs batch timings as CSV");

  QueryOptions q;
  auto* query = app.add_subcommand("query", "Query the events stored in --state");
  query->add_option("--from", q.from, "Earliest time");
  query->add_option("--to", q.to, "Latest time");
  query->add_option("--keyword", q.keyword, "Keyword among the top keywords");
  query->add_option("--lat", q.lat, "Center latitude");
  query->add_option("--lon", q.lon, "Center longitude");
  query->add_option("--radius-m", q.radius_m, "Radius around the center in meters");
  query->add_option("--id", q.id, "Print one event with its tweets");

  GenerateOptions g;
  auto* generate = app.add_subcommand("generate", "Write a synthetic stream with planted bursts");
  generate->add_option("--out", g.out, "Stream output path");
  generate->add_option("--truth", g.truth, "Planted burst output path");
  generate->add_option("--seed", g.params.seed, "Random seed")->capture_default_str();
  generate->add_option("--prefix", g.params.id_prefix, "Tweet id prefix")->capture_default_str();
  generate->add_option("--hours", g.hours, "Stream length")->capture_default_str();
  generate->add_option("--per-hour", g.params.background_per_hour, "Background tweets per hour")
      ->capture_default_str();
  generate->add_option("--bursts", g.params.bursts, "Planted bursts")->capture_default_str();
  generate->add_option("--warmup-hours", g.params.warmup_s, "Hours without bursts at the start")
      ->transform([](std::string s) { return std::to_string(std::stoll(s) * 3600); });

  TrainOptions t;
  auto* train = app.add_subcommand("train", "Train the event classifier");
  train->add_option("--out", t.out, "Model output path");
  train->add_option("--instances", t.instances, "Labeled feature vectors to train on");
  train->add_option("--seed", t.seed, "Seed of the synthetic training stream")->capture_default_str();
  train->add_option("--write-instances", t.write_instances, "Also write the labeled instances here");
  train->add_option("--l2", t.train.l2, "L2 penalty")->capture_default_str();
  train->add_option("--epochs", t.train.epochs, "Gradient steps")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  try
  {
    if (run->parsed())
    {
      cmd_run(o);
    }
    else if (save->parsed())
    {
      require(o.state, "--state");
      cmd_run(o);
    }
    else if (load->parsed())
    {
      cmd_load(o);
    }
    else if (bench->parsed())
    {
      cmd_bench(o);
    }
    else if (query->parsed())
    {
      cmd_query(o, q);
    }
    else if (generate->parsed())
    {
      cmd_generate(g);
    }
    else if (train->parsed())
    {
      cmd_train(o, t);
    }
  }
  catch (const CLI::Error& e)
  {
    return app.exit(e);
  }
  catch (const std::exception& e)
  {
    std::cerr << "radar: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
