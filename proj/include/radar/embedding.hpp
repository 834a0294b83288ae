#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "radar/io.hpp"

namespace radar
{
struct EmbeddingParams
{
  std::size_t dimension = 50;
  std::size_t negatives = 5;
  double learning_rate = 0.025;
  /// The rate decays linearly to learning_rate * min_rate_fraction over decay_steps trained tweets.
  double min_rate_fraction = 1e-4;
  uint64_t decay_steps = 1'000'000;
  std::size_t cache_size = 50'000;
  double replay_ratio = 0.1;
  double clip_norm = 5.0;
  uint64_t seed = 42;
};

class UnknownTextError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

namespace detail
{
inline uint64_t fnv1a(std::string_view s)
{
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s)
  {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline uint64_t splitmix64(uint64_t& state)
{
  uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline double sigmoid(double x)
{
  if (x >= 0)
  {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(sigmoid(x)) without overflow.
inline double log_sigmoid(double x)
{
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

/// Fenwick tree over integer weights, for sampling proportional to weight.
class WeightTree
{
public:
  void push_back(int64_t w)
  {
    const std::size_t i = weights_.size();
    weights_.push_back(0);
    tree_.push_back(0);
    // Pull in the prefix this new node covers.
    const std::size_t pos = i + 1;
    const std::size_t low = pos - (pos & (~pos + 1));
    int64_t covered = 0;
    for (std::size_t j = low; j < i; ++j)
    {
      covered += weights_[j];
    }
    tree_[i] = covered;
    set(i, w);
  }

  void set(std::size_t i, int64_t w)
  {
    const int64_t delta = w - weights_[i];
    weights_[i] = w;
    total_ += delta;
    for (std::size_t pos = i + 1; pos <= tree_.size(); pos += pos & (~pos + 1))
    {
      tree_[pos - 1] += delta;
    }
  }

  int64_t total() const { return total_; }
  std::size_t size() const { return weights_.size(); }

  /// Smallest index whose inclusive prefix sum exceeds `target`.
  std::size_t find(int64_t target) const
  {
    std::size_t pos = 0;
    std::size_t step = 1;
    while (step * 2 <= tree_.size())
    {
      step *= 2;
    }
    for (; step > 0; step /= 2)
    {
      if (pos + step <= tree_.size() && tree_[pos + step - 1] <= target)
      {
        pos += step;
        target -= tree_[pos - 1];
      }
    }
    return pos;
  }

private:
  std::vector<int64_t> weights_;
  std::vector<int64_t> tree_;
  int64_t total_ = 0;
};
}  // namespace detail

/// Online keyword embeddings trained with skip-gram negative sampling where
/// the tweet is the context: each keyword is predicted from the mean input
/// vector of the tweet's other keywords.
class EmbeddingModel
{
public:
  explicit EmbeddingModel(EmbeddingParams params = {}) : params_(params), rng_(params.seed)
  {
    if (params_.dimension == 0)
    {
      throw std::invalid_argument("embedding dimension must be positive");
    }
  }

  const EmbeddingParams& params() const { return params_; }
  std::size_t dimension() const { return params_.dimension; }
  std::size_t vocabulary_size() const { return words_.size(); }
  uint64_t steps() const { return steps_; }
  std::size_t cached_tweets() const { return cache_.size(); }

  bool knows(const std::string& keyword) const { return index_.count(keyword) != 0; }

  /// Input vector of a known keyword; throws std::out_of_range otherwise.
  std::vector<double> vector_of(const std::string& keyword) const
  {
    const std::size_t i = index_.at(keyword);
    return {input_.begin() + static_cast<std::ptrdiff_t>(i * dim()),
            input_.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim())};
  }

  /// Deterministic initial vector for a keyword, uniform in [-0.5, 0.5] / D.
  std::vector<double> initial_vector(const std::string& keyword) const
  {
    uint64_t state = detail::fnv1a(keyword) ^ params_.seed;
    std::vector<double> v(dim());
    for (auto& x : v)
    {
      const double u = static_cast<double>(detail::splitmix64(state) >> 11) * 0x1.0p-53;
      x = (u - 0.5) / static_cast<double>(dim());
    }
    return v;
  }

  double current_learning_rate() const
  {
    const double progress =
        static_cast<double>(steps_) / static_cast<double>(std::max<uint64_t>(1, params_.decay_steps));
    return params_.learning_rate * std::max(params_.min_rate_fraction, 1.0 - progress);
  }

  /// One pass over the batch followed by replayed cached tweets; the batch
  /// then joins the cache.
  void train(std::span<const std::vector<std::string>> batch)
  {
    std::vector<std::vector<uint32_t>> encoded;
    encoded.reserve(batch.size());
    for (const auto& kws : batch)
    {
      encoded.push_back(encode(kws));
    }
    for (const auto& t : encoded)
    {
      train_tweet(t);
    }
    replay_credit_ += params_.replay_ratio * static_cast<double>(batch.size());
    while (replay_credit_ >= 1.0 && !cache_.empty())
    {
      replay_credit_ -= 1.0;
      train_tweet(cache_[rng_() % cache_.size()]);
    }
    for (auto& t : encoded)
    {
      if (params_.cache_size == 0)
      {
        break;
      }
      cache_.push_back(std::move(t));
      if (cache_.size() > params_.cache_size)
      {
        cache_.pop_front();
      }
    }
  }

  /// Expected negative-sampling loss per predicted keyword over the batch,
  /// with the negative term taken in expectation under the noise distribution.
  /// Unknown keywords are ignored.
  double objective(std::span<const std::vector<std::string>> batch) const
  {
    double total = 0.0;
    std::size_t terms = 0;
    const double noise_total = static_cast<double>(noise_.total());
    std::vector<double> h(dim());
    for (const auto& kws : batch)
    {
      std::vector<uint32_t> ids;
      for (const auto& k : kws)
      {
        auto it = index_.find(k);
        if (it != index_.end())
        {
          ids.push_back(it->second);
        }
      }
      if (ids.size() < 2)
      {
        continue;
      }
      for (std::size_t target = 0; target < ids.size(); ++target)
      {
        context_mean(ids, target, h);
        double loss = -detail::log_sigmoid(dot(output(ids[target]), h.data()));
        for (uint32_t n = 0; n < words_.size(); ++n)
        {
          const double p = static_cast<double>(noise_weight(n)) / noise_total;
          loss -= static_cast<double>(params_.negatives) * p *
                  detail::log_sigmoid(-dot(output(n), h.data()));
        }
        total += loss;
        ++terms;
      }
    }
    return terms == 0 ? 0.0 : total / static_cast<double>(terms);
  }

  /// Weighted mean of the known keywords' vectors, or nullopt when no known
  /// keyword carries positive weight.
  std::optional<std::vector<double>> embed_weighted(
      std::span<const std::pair<std::string, double>> weighted) const
  {
    std::vector<double> acc(dim(), 0.0);
    double mass = 0.0;
    for (const auto& [k, w] : weighted)
    {
      auto it = index_.find(k);
      if (it == index_.end() || !(w > 0.0))
      {
        continue;
      }
      const double* v = input(it->second);
      for (std::size_t j = 0; j < dim(); ++j)
      {
        acc[j] += w * v[j];
      }
      mass += w;
    }
    if (!(mass > 0.0))
    {
      return std::nullopt;
    }
    for (auto& x : acc)
    {
      x /= mass;
    }
    return acc;
  }

  struct TextEmbedding
  {
    std::vector<double> vector;
    std::size_t known = 0;
    std::size_t unknown = 0;
  };

  /// Multiplicity-weighted mean of known keyword vectors; unknown keywords are
  /// skipped and counted. Throws UnknownTextError when none is known.
  TextEmbedding embed_text(std::span<const std::string> keywords) const
  {
    std::vector<std::string> sorted(keywords.begin(), keywords.end());
    std::sort(sorted.begin(), sorted.end());
    TextEmbedding out;
    std::vector<std::pair<std::string, double>> weighted;
    for (std::size_t i = 0; i < sorted.size();)
    {
      std::size_t j = i;
      while (j < sorted.size() && sorted[j] == sorted[i])
      {
        ++j;
      }
      if (knows(sorted[i]))
      {
        out.known += j - i;
        weighted.emplace_back(sorted[i], static_cast<double>(j - i));
      }
      else
      {
        out.unknown += j - i;
      }
      i = j;
    }
    auto v = embed_weighted(weighted);
    if (!v)
    {
      throw UnknownTextError("no known keyword in text");
    }
    out.vector = std::move(*v);
    return out;
  }

  friend bool operator==(const EmbeddingModel& a, const EmbeddingModel& b)
  {
    return a.words_ == b.words_ && a.counts_ == b.counts_ && a.input_ == b.input_ &&
           a.output_ == b.output_ && a.steps_ == b.steps_ && a.cache_ == b.cache_ &&
           a.replay_credit_ == b.replay_credit_ && a.rng_ == b.rng_;
  }

  void write(std::ostream& out) const
  {
    out << "dimension " << dim() << "\n";
    out << "steps " << steps_ << "\n";
    out << "replay_credit " << format_float(replay_credit_) << "\n";
    out << "rng " << rng_ << "\n";
    out << "words " << words_.size() << "\n";
    for (std::size_t i = 0; i < words_.size(); ++i)
    {
      out << words_[i] << " " << counts_[i];
      for (std::size_t j = 0; j < dim(); ++j)
      {
        out << " " << format_float(input_[i * dim() + j]);
      }
      for (std::size_t j = 0; j < dim(); ++j)
      {
        out << " " << format_float(output_[i * dim() + j]);
      }
      out << "\n";
    }
    out << "cache " << cache_.size() << "\n";
    for (const auto& t : cache_)
    {
      out << t.size();
      for (uint32_t id : t)
      {
        out << " " << id;
      }
      out << "\n";
    }
  }

  /// Reads a model written by write(); training parameters come from `params`.
  static EmbeddingModel read(std::istream& in, EmbeddingParams params)
  {
    expect_keyword(in, "dimension");
    params.dimension = parse_number<std::size_t>(expect_token(in, "dimension"));
    EmbeddingModel m(params);
    expect_keyword(in, "steps");
    m.steps_ = parse_number<uint64_t>(expect_token(in, "steps"));
    expect_keyword(in, "replay_credit");
    m.replay_credit_ = parse_number<double>(expect_token(in, "replay credit"));
    expect_keyword(in, "rng");
    if (!(in >> m.rng_))
    {
      throw CorruptStateError("bad embedding rng state");
    }
    expect_keyword(in, "words");
    const auto n = parse_number<std::size_t>(expect_token(in, "word count"));
    for (std::size_t i = 0; i < n; ++i)
    {
      const auto word = expect_token(in, "word");
      const auto count = parse_number<int64_t>(expect_token(in, "word count"));
      m.add_word(word);
      m.counts_.back() = count;
      m.noise_.set(i, noise_weight_of(count));
      for (std::size_t j = 0; j < m.dim(); ++j)
      {
        m.input_[i * m.dim() + j] = parse_number<double>(expect_token(in, "vector entry"));
      }
      for (std::size_t j = 0; j < m.dim(); ++j)
      {
        m.output_[i * m.dim() + j] = parse_number<double>(expect_token(in, "vector entry"));
      }
    }
    expect_keyword(in, "cache");
    const auto c = parse_number<std::size_t>(expect_token(in, "cache size"));
    for (std::size_t i = 0; i < c; ++i)
    {
      std::vector<uint32_t> t(parse_number<std::size_t>(expect_token(in, "tweet size")));
      for (auto& id : t)
      {
        id = parse_number<uint32_t>(expect_token(in, "keyword index"));
        if (id >= n)
        {
          throw CorruptStateError("cached keyword index out of range");
        }
      }
      m.cache_.push_back(std::move(t));
    }
    return m;
  }

private:
  std::size_t dim() const { return params_.dimension; }
  const double* input(uint32_t i) const { return input_.data() + i * dim(); }
  double* input(uint32_t i) { return input_.data() + i * dim(); }
  const double* output(uint32_t i) const { return output_.data() + i * dim(); }
  double* output(uint32_t i) { return output_.data() + i * dim(); }

  double dot(const double* a, const double* b) const
  {
    double s = 0.0;
    for (std::size_t j = 0; j < dim(); ++j)
    {
      s += a[j] * b[j];
    }
    return s;
  }

  /// Noise weight count^0.75 in fixed point, so sampling is exact and portable.
  static int64_t noise_weight_of(int64_t count)
  {
    return static_cast<int64_t>(std::llround(std::pow(static_cast<double>(count), 0.75) * 1024.0));
  }
  int64_t noise_weight(uint32_t i) const { return noise_weight_of(counts_[i]); }

  uint32_t add_word(const std::string& w)
  {
    const auto id = static_cast<uint32_t>(words_.size());
    index_.emplace(w, id);
    words_.push_back(w);
    counts_.push_back(0);
    const auto init = initial_vector(w);
    input_.insert(input_.end(), init.begin(), init.end());
    output_.insert(output_.end(), dim(), 0.0);
    noise_.push_back(0);
    return id;
  }

  std::vector<uint32_t> encode(const std::vector<std::string>& kws)
  {
    std::vector<uint32_t> ids;
    ids.reserve(kws.size());
    for (const auto& k : kws)
    {
      auto it = index_.find(k);
      const uint32_t id = it == index_.end() ? add_word(k) : it->second;
      ++counts_[id];
      noise_.set(id, noise_weight(id));
      ids.push_back(id);
    }
    return ids;
  }

  void context_mean(const std::vector<uint32_t>& ids, std::size_t target, std::vector<double>& h) const
  {
    std::fill(h.begin(), h.end(), 0.0);
    for (std::size_t c = 0; c < ids.size(); ++c)
    {
      if (c == target)
      {
        continue;
      }
      const double* v = input(ids[c]);
      for (std::size_t j = 0; j < dim(); ++j)
      {
        h[j] += v[j];
      }
    }
    const double inv = 1.0 / static_cast<double>(ids.size() - 1);
    for (auto& x : h)
    {
      x *= inv;
    }
  }

  void clip(std::vector<double>& g) const
  {
    double norm = 0.0;
    for (double x : g)
    {
      norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm > params_.clip_norm)
    {
      const double scale = params_.clip_norm / norm;
      for (auto& x : g)
      {
        x *= scale;
      }
    }
  }

  void update_output(uint32_t w, double g, const std::vector<double>& h, std::vector<double>& grad_h)
  {
    double* u = output(w);
    std::vector<double> step(dim());
    for (std::size_t j = 0; j < dim(); ++j)
    {
      grad_h[j] += g * u[j];
      step[j] = g * h[j];
    }
    clip(step);
    for (std::size_t j = 0; j < dim(); ++j)
    {
      u[j] += step[j];
    }
  }

  void train_tweet(const std::vector<uint32_t>& ids)
  {
    ++steps_;
    if (ids.size() < 2 || noise_.total() == 0)
    {
      return;
    }
    const double lr = current_learning_rate();
    std::vector<double> h(dim());
    std::vector<double> grad_h(dim());
    for (std::size_t target = 0; target < ids.size(); ++target)
    {
      context_mean(ids, target, h);
      std::fill(grad_h.begin(), grad_h.end(), 0.0);
      const uint32_t w = ids[target];
      update_output(w, lr * (1.0 - detail::sigmoid(dot(output(w), h.data()))), h, grad_h);
      for (std::size_t k = 0; k < params_.negatives; ++k)
      {
        const auto n = static_cast<uint32_t>(
            noise_.find(static_cast<int64_t>(rng_() % static_cast<uint64_t>(noise_.total()))));
        if (n == w)
        {
          continue;
        }
        update_output(n, -lr * detail::sigmoid(dot(output(n), h.data())), h, grad_h);
      }
      clip(grad_h);
      const double share = 1.0 / static_cast<double>(ids.size() - 1);
      for (std::size_t c = 0; c < ids.size(); ++c)
      {
        if (c == target)
        {
          continue;
        }
        double* v = input(ids[c]);
        for (std::size_t j = 0; j < dim(); ++j)
        {
          v[j] += share * grad_h[j];
        }
      }
    }
  }

  EmbeddingParams params_;
  std::unordered_map<std::string, uint32_t> index_;
  std::vector<std::string> words_;
  std::vector<int64_t> counts_;
  std::vector<double> input_;
  std::vector<double> output_;
  detail::WeightTree noise_;
  std::deque<std::vector<uint32_t>> cache_;
  double replay_credit_ = 0.0;
  uint64_t steps_ = 0;
  std::mt19937_64 rng_;
};

/// Cosine similarity; 0 when either vector is zero.
inline double cosine(std::span<const double> a, std::span<const double> b)
{
  if (a.size() != b.size())
  {
    throw std::invalid_argument("cosine of vectors with different dimensions");
  }
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
  {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0)
  {
    return 0.0;
  }
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

}  // namespace radar
