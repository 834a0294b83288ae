#pragma once

#include <charconv>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "radar/engine.hpp"
#include "radar/event_store.hpp"
#include "radar/ingest.hpp"

namespace radar
{
/// What readers see: an immutable copy taken between shifts.
struct PublishedState
{
  EventStore events;
  EngineStatus status;
  IngestStats ingest;
};

inline std::shared_ptr<const PublishedState> snapshot_of(const Engine& engine,
                                                         const IngestStats& ingest = {})
{
  auto s = std::make_shared<PublishedState>();
  s->events = engine.events();
  s->status = engine.status();
  s->ingest = ingest;
  return s;
}

/// Holds the latest published state; readers take a reference-counted handle,
/// the detection loop swaps in a new one.
class Publisher
{
public:
  Publisher() : current_(std::make_shared<const PublishedState>()) {}

  void publish(std::shared_ptr<const PublishedState> state)
  {
    std::lock_guard lock(mutex_);
    current_ = std::move(state);
  }

  std::shared_ptr<const PublishedState> current() const
  {
    std::lock_guard lock(mutex_);
    return current_;
  }

private:
  mutable std::mutex mutex_;
  std::shared_ptr<const PublishedState> current_;
};

struct ApiResponse
{
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

using QueryParams = std::multimap<std::string, std::string>;

inline ApiResponse error_response(int status, const std::string& message)
{
  nlohmann::ordered_json j;
  j["error"] = message;
  return {status, j.dump(), "application/json"};
}

namespace detail
{
template <typename Number>
Number query_number(const std::string& name, const std::string& text)
{
  Number v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size())
  {
    throw QueryError("parameter '" + name + "' is not a valid number: '" + text + "'");
  }
  return v;
}
}  // namespace detail

/// Builds and validates an EventQuery from URL parameters. Unknown or
/// repeated parameters are rejected.
inline EventQuery parse_event_query(const QueryParams& params)
{
  EventQuery q;
  for (auto it = params.begin(); it != params.end(); ++it)
  {
    const auto& [name, value] = *it;
    if (params.count(name) > 1)
    {
      throw QueryError("parameter '" + name + "' given more than once");
    }
    if (name == "from")
    {
      q.from = detail::query_number<Timestamp>(name, value);
    }
    else if (name == "to")
    {
      q.to = detail::query_number<Timestamp>(name, value);
    }
    else if (name == "keyword")
    {
      q.keyword = value;
    }
    else if (name == "lat")
    {
      q.lat = detail::query_number<double>(name, value);
    }
    else if (name == "lon")
    {
      q.lon = detail::query_number<double>(name, value);
    }
    else if (name == "radius_m")
    {
      q.radius_m = detail::query_number<double>(name, value);
    }
    else
    {
      throw QueryError("unknown parameter '" + name + "'");
    }
  }
  q.validate();
  return q;
}

/// GET /events: matching events as an array, member tweets listed by id.
inline ApiResponse events_response(const PublishedState& state, const QueryParams& params)
{
  try
  {
    const auto q = parse_event_query(params);
    auto out = nlohmann::ordered_json::array();
    for (const auto& e : state.events.query(q))
    {
      out.push_back(event_json(e, false));
    }
    return {200, out.dump(), "application/json"};
  }
  catch (const QueryError& e)
  {
    return error_response(400, e.what());
  }
}

/// GET /events/{id}: one event with its member tweets inlined.
inline ApiResponse event_response(const PublishedState& state, const std::string& id)
{
  const EventRecord* e = state.events.find(id);
  if (!e)
  {
    return error_response(404, "no event '" + id + "'");
  }
  return {200, event_json(*e, true).dump(), "application/json"};
}

/// GET /status: window position, counts and shift latency.
inline ApiResponse status_response(const PublishedState& state)
{
  auto j = status_json(state.status);
  j["ingest"] = {{"lines", state.ingest.lines},
                 {"parsed", state.ingest.parsed},
                 {"comments", state.ingest.comments},
                 {"malformed", state.ingest.malformed},
                 {"invalid_coordinates", state.ingest.invalid_coordinates},
                 {"empty_keywords", state.ingest.empty_keywords}};
  return {200, j.dump(), "application/json"};
}

/// Read-only HTTP surface over a Publisher, served from a background thread.
class HttpService
{
public:
  explicit HttpService(const Publisher& publisher, std::optional<std::string> static_dir = {})
      : publisher_(&publisher)
  {
    const auto reply = [](httplib::Response& res, const ApiResponse& r) {
      res.status = r.status;
      res.set_content(r.body, r.content_type);
    };
    server_.Get("/events", [this, reply](const httplib::Request& req, httplib::Response& res) {
      reply(res, events_response(*publisher_->current(), req.params));
    });
    server_.Get(R"(/events/([^/]+))",
                [this, reply](const httplib::Request& req, httplib::Response& res) {
                  reply(res, event_response(*publisher_->current(), req.matches[1].str()));
                });
    server_.Get("/status", [this, reply](const httplib::Request&, httplib::Response& res) {
      reply(res, status_response(*publisher_->current()));
    });
    if (static_dir && !server_.set_mount_point("/", *static_dir))
    {
      throw std::invalid_argument("static directory not found: " + *static_dir);
    }
  }

  ~HttpService() { stop(); }
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  /// Binds and starts serving; port 0 picks a free port. Returns the port.
  int start(const std::string& host, int port)
  {
    if (thread_.joinable())
    {
      throw std::logic_error("service already started");
    }
    if (port == 0)
    {
      port_ = server_.bind_to_any_port(host);
    }
    else
    {
      port_ = server_.bind_to_port(host, port) ? port : -1;
    }
    if (port_ < 0)
    {
      throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    }
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void stop()
  {
    if (thread_.joinable())
    {
      server_.stop();
      thread_.join();
    }
  }

  int port() const { return port_; }

private:
  const Publisher* publisher_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace radar
