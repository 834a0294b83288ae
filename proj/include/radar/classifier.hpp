#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "radar/candidate_generator.hpp"
#include "radar/embedding.hpp"
#include "radar/geo.hpp"
#include "radar/io.hpp"
#include "radar/summarizer.hpp"

namespace radar
{
inline constexpr std::size_t kFeatureCount = 8;

/// Candidate features, in this order: temporal unusualness, spatial
/// unusualness, temporal burstiness, spatial burstiness, tweet count,
/// distinct users, spatial deviation (m), time span (s).
struct FeatureVector
{
  std::array<double, kFeatureCount> values{};

  double temporal_unusualness() const { return values[0]; }
  double spatial_unusualness() const { return values[1]; }
  double temporal_burstiness() const { return values[2]; }
  double spatial_burstiness() const { return values[3]; }
  double tweet_count() const { return values[4]; }
  double distinct_users() const { return values[5]; }
  double spatial_deviation_m() const { return values[6]; }
  double time_span_s() const { return values[7]; }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

inline const std::array<std::string, kFeatureCount>& feature_names()
{
  static const std::array<std::string, kFeatureCount> names = {
      "temporal_unusualness", "spatial_unusualness", "temporal_burstiness", "spatial_burstiness",
      "tweet_count",          "distinct_users",      "spatial_deviation_m", "time_span_s"};
  return names;
}

/// No historical snapshot precedes the current window yet.
class MissingHistoryError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

struct FeatureParams
{
  double estimation_bandwidth_m = 2000.0;  // h_est for history estimates
  double burst_bandwidth_m = 2000.0;       // radius for spatial burstiness
};

/// Window-level inputs shared by every candidate of one shift.
struct WindowContext
{
  std::vector<TweetPtr> tweets;
  SpatialGrid<std::size_t> grid{2000.0};
  std::map<std::string, int64_t> keyword_counts;
  std::optional<std::vector<double>> embedding;
};

inline std::map<std::string, int64_t> keyword_counts_of(std::span<const TweetPtr> tweets)
{
  std::map<std::string, int64_t> counts;
  for (const auto& t : tweets)
  {
    for (const auto& k : t->keywords)
    {
      ++counts[k];
    }
  }
  return counts;
}

inline std::vector<std::pair<std::string, double>> as_weights(const std::map<std::string, int64_t>& counts)
{
  std::vector<std::pair<std::string, double>> out;
  out.reserve(counts.size());
  for (const auto& [k, c] : counts)
  {
    out.emplace_back(k, static_cast<double>(c));
  }
  return out;
}

inline WindowContext make_window_context(std::span<const TweetPtr> tweets, const EmbeddingModel& model,
                                         const FeatureParams& params)
{
  WindowContext w;
  w.tweets.assign(tweets.begin(), tweets.end());
  w.grid = SpatialGrid<std::size_t>(params.burst_bandwidth_m);
  for (std::size_t i = 0; i < w.tweets.size(); ++i)
  {
    w.grid.insert(w.tweets[i]->location, i);
  }
  w.keyword_counts = keyword_counts_of(tweets);
  w.embedding = model.embed_weighted(as_weights(w.keyword_counts));
  return w;
}

/// Keyword multiplicities the snapshot attributes to the region around
/// `location`: each cluster's counts weighted by its kernel.
inline std::map<std::string, double> regional_history(const TimelineSnapshot& history,
                                                      const GeoPoint& location, double bandwidth_m)
{
  std::map<std::string, double> out;
  for (const auto& c : history.clusters)
  {
    const double g = epanechnikov(haversine_m(location, c.center()), bandwidth_m);
    if (!(g > 0.0))
    {
      continue;
    }
    for (const auto& [k, n] : c.me)
    {
      out[k] += g * static_cast<double>(n);
    }
  }
  return out;
}

inline double optional_cosine(const std::optional<std::vector<double>>& a,
                              const std::optional<std::vector<double>>& b)
{
  if (!a || !b)
  {
    return 0.0;
  }
  return cosine(*a, *b);
}

inline FeatureVector extract_features(const CandidateEvent& candidate, const TimelineSnapshot& history,
                                      const EmbeddingModel& model, const WindowContext& window,
                                      const FeatureParams& params)
{
  if (candidate.members.empty())
  {
    throw std::invalid_argument("candidate has no members");
  }
  const GeoPoint pivot = candidate.pivot->location;
  const auto observed = keyword_counts_of(candidate.members);
  const auto e_cand = model.embed_weighted(as_weights(observed));

  const auto regional = regional_history(history, pivot, params.estimation_bandwidth_m);
  const auto e_hist = model.embed_weighted(
      std::vector<std::pair<std::string, double>>(regional.begin(), regional.end()));

  FeatureVector f;
  f.values[0] = 1.0 - optional_cosine(e_cand, e_hist);
  f.values[1] = 1.0 - optional_cosine(e_cand, window.embedding);

  double obs_total = 0.0;
  double expected = 0.0;
  for (const auto& [k, c] : observed)
  {
    obs_total += static_cast<double>(c);
    expected += estimate_occurrences(history.clusters, k, pivot, params.estimation_bandwidth_m);
  }
  f.values[2] = obs_total / (1.0 + expected);

  double near_mass = 0.0;
  window.grid.for_each_near(pivot, [&](std::size_t i) {
    const auto& t = *window.tweets[i];
    if (haversine_m(pivot, t.location) > params.burst_bandwidth_m)
    {
      return;
    }
    for (const auto& k : t.keywords)
    {
      if (observed.count(k))
      {
        near_mass += 1.0;
      }
    }
  });
  double window_mass = 0.0;
  for (const auto& [k, c] : observed)
  {
    auto it = window.keyword_counts.find(k);
    if (it != window.keyword_counts.end())
    {
      window_mass += static_cast<double>(it->second);
    }
  }
  f.values[3] = near_mass / (1.0 + window_mass);

  std::set<std::string> users;
  Timestamp first = candidate.members.front()->timestamp;
  Timestamp last = first;
  TweetCluster summary;
  for (const auto& m : candidate.members)
  {
    users.insert(m->user_id);
    first = std::min(first, m->timestamp);
    last = std::max(last, m->timestamp);
    summary.absorb(*m);
  }
  f.values[4] = static_cast<double>(candidate.members.size());
  f.values[5] = static_cast<double>(users.size());
  f.values[6] = summary.spatial_deviation_m();
  f.values[7] = static_cast<double>(last - first);
  return f;
}

struct Decision
{
  double probability = 0.5;
  bool is_event = false;
};

struct TrainParams
{
  double l2 = 1e-3;
  std::size_t epochs = 2000;
  double learning_rate = 0.5;
};

struct LabeledInstance
{
  std::vector<double> features;
  bool label = false;
};

/// Mean logistic loss plus (l2 / 2) * |w|^2 and its gradient. `params` holds
/// the feature weights followed by the bias; the bias is not regularised.
inline std::pair<double, std::vector<double>> loss_and_gradient(
    std::span<const double> params, std::span<const std::vector<double>> x,
    std::span<const double> y, double l2)
{
  const std::size_t k = params.size() - 1;
  std::vector<double> grad(params.size(), 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
  {
    if (x[i].size() != k)
    {
      throw std::invalid_argument("feature length mismatch");
    }
    double z = params[k];
    for (std::size_t j = 0; j < k; ++j)
    {
      z += params[j] * x[i][j];
    }
    // -[y log s(z) + (1-y) log(1-s(z))]
    loss -= y[i] * detail::log_sigmoid(z) + (1.0 - y[i]) * detail::log_sigmoid(-z);
    const double r = detail::sigmoid(z) - y[i];
    for (std::size_t j = 0; j < k; ++j)
    {
      grad[j] += r * x[i][j];
    }
    grad[k] += r;
  }
  const double inv = x.empty() ? 0.0 : 1.0 / static_cast<double>(x.size());
  loss *= inv;
  for (auto& g : grad)
  {
    g *= inv;
  }
  for (std::size_t j = 0; j < k; ++j)
  {
    loss += 0.5 * l2 * params[j] * params[j];
    grad[j] += l2 * params[j];
  }
  return {loss, grad};
}

/// Logistic regression over standardised features.
class LogisticModel
{
public:
  LogisticModel() = default;

  explicit LogisticModel(std::size_t features)
      : weights_(features, 0.0), mean_(features, 0.0), scale_(features, 1.0)
  {
  }

  std::size_t feature_count() const { return weights_.size(); }
  const std::vector<double>& weights() const { return weights_; }
  double bias() const { return bias_; }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& scale() const { return scale_; }
  double threshold() const { return threshold_; }
  void set_threshold(double t) { threshold_ = t; }

  void set_parameters(std::vector<double> weights, double bias)
  {
    if (weights.size() != weights_.size())
    {
      throw std::invalid_argument("weight length mismatch");
    }
    weights_ = std::move(weights);
    bias_ = bias;
  }

  void set_standardization(std::vector<double> mean, std::vector<double> scale)
  {
    if (mean.size() != weights_.size() || scale.size() != weights_.size())
    {
      throw std::invalid_argument("standardisation length mismatch");
    }
    mean_ = std::move(mean);
    scale_ = std::move(scale);
  }

  std::vector<double> standardize(std::span<const double> x) const
  {
    if (x.size() != weights_.size())
    {
      throw std::invalid_argument("feature length mismatch: expected " +
                                  std::to_string(weights_.size()) + ", got " +
                                  std::to_string(x.size()));
    }
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j)
    {
      out[j] = (x[j] - mean_[j]) / scale_[j];
    }
    return out;
  }

  double probability(std::span<const double> x) const
  {
    const auto s = standardize(x);
    double z = bias_;
    for (std::size_t j = 0; j < s.size(); ++j)
    {
      z += weights_[j] * s[j];
    }
    return detail::sigmoid(z);
  }

  Decision classify(std::span<const double> x) const
  {
    const double p = probability(x);
    return {p, p >= threshold_};
  }

  Decision classify(const FeatureVector& f) const { return classify(std::span<const double>(f.values)); }

  friend bool operator==(const LogisticModel&, const LogisticModel&) = default;

  void write(std::ostream& out) const
  {
    out << "features " << weights_.size() << "\n";
    const auto row = [&](const char* name, const std::vector<double>& v) {
      out << name;
      for (double x : v)
      {
        out << " " << format_float(x);
      }
      out << "\n";
    };
    row("weights", weights_);
    out << "bias " << format_float(bias_) << "\n";
    row("mean", mean_);
    row("scale", scale_);
    out << "threshold " << format_float(threshold_) << "\n";
  }

  static LogisticModel read(std::istream& in)
  {
    expect_keyword(in, "features");
    LogisticModel m(parse_number<std::size_t>(expect_token(in, "feature count")));
    const auto row = [&](const char* name, std::vector<double>& v) {
      expect_keyword(in, name);
      for (auto& x : v)
      {
        x = parse_number<double>(expect_token(in, name));
      }
    };
    row("weights", m.weights_);
    expect_keyword(in, "bias");
    m.bias_ = parse_number<double>(expect_token(in, "bias"));
    row("mean", m.mean_);
    row("scale", m.scale_);
    expect_keyword(in, "threshold");
    m.threshold_ = parse_number<double>(expect_token(in, "threshold"));
    for (double s : m.scale_)
    {
      if (!(s > 0.0))
      {
        throw CorruptStateError("non-positive feature scale");
      }
    }
    return m;
  }

private:
  std::vector<double> weights_;
  double bias_ = 0.0;
  std::vector<double> mean_;
  std::vector<double> scale_;
  double threshold_ = 0.5;
};

/// Fits standardisation on the instances, then runs full-batch gradient
/// descent. Requires both classes to be present.
inline LogisticModel train_classifier(std::span<const LabeledInstance> instances,
                                      const TrainParams& params = {})
{
  if (instances.empty())
  {
    throw std::invalid_argument("no training instances");
  }
  const std::size_t k = instances.front().features.size();
  std::size_t positives = 0;
  for (const auto& inst : instances)
  {
    if (inst.features.size() != k)
    {
      throw std::invalid_argument("feature length mismatch");
    }
    positives += inst.label ? 1 : 0;
  }
  if (positives == 0 || positives == instances.size())
  {
    throw std::invalid_argument("training set needs both classes");
  }

  std::vector<double> mean(k, 0.0), scale(k, 0.0);
  const double n = static_cast<double>(instances.size());
  for (const auto& inst : instances)
  {
    for (std::size_t j = 0; j < k; ++j)
    {
      mean[j] += inst.features[j] / n;
    }
  }
  for (const auto& inst : instances)
  {
    for (std::size_t j = 0; j < k; ++j)
    {
      const double d = inst.features[j] - mean[j];
      scale[j] += d * d / n;
    }
  }
  for (auto& s : scale)
  {
    s = std::sqrt(s);
    if (!(s > 0.0))
    {
      s = 1.0;
    }
  }

  LogisticModel model(k);
  model.set_standardization(mean, scale);
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (const auto& inst : instances)
  {
    x.push_back(model.standardize(inst.features));
    y.push_back(inst.label ? 1.0 : 0.0);
  }
  std::vector<double> theta(k + 1, 0.0);
  for (std::size_t epoch = 0; epoch < params.epochs; ++epoch)
  {
    const auto grad = loss_and_gradient(theta, x, y, params.l2).second;
    for (std::size_t j = 0; j <= k; ++j)
    {
      theta[j] -= params.learning_rate * grad[j];
    }
  }
  model.set_parameters(std::vector<double>(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(k)),
                       theta[k]);
  return model;
}

/// Line-delimited `label,f1,...,fK`; '#' lines are comments.
inline std::vector<LabeledInstance> read_instances(std::istream& in)
{
  std::vector<LabeledInstance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line))
  {
    ++lineno;
    if (line.empty() || line[0] == '#')
    {
      continue;
    }
    std::stringstream fields(line);
    std::string cell;
    LabeledInstance inst;
    bool first = true;
    while (std::getline(fields, cell, ','))
    {
      try
      {
        if (first)
        {
          const int label = parse_number<int>(cell);
          if (label != 0 && label != 1)
          {
            throw std::invalid_argument("label must be 0 or 1");
          }
          inst.label = label == 1;
          first = false;
        }
        else
        {
          inst.features.push_back(parse_number<double>(cell));
        }
      }
      catch (const std::exception& e)
      {
        throw std::invalid_argument("instances line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    if (!out.empty() && out.front().features.size() != inst.features.size())
    {
      throw std::invalid_argument("instances line " + std::to_string(lineno) +
                                  ": feature length mismatch");
    }
    out.push_back(std::move(inst));
  }
  return out;
}

inline void write_instances(std::ostream& out, std::span<const LabeledInstance> instances)
{
  for (const auto& inst : instances)
  {
    out << (inst.label ? 1 : 0);
    for (double x : inst.features)
    {
      out << "," << format_float(x);
    }
    out << "\n";
  }
}

}  // namespace radar
