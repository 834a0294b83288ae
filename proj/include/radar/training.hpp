#pragma once

#include <set>
#include <string>
#include <vector>

#include "radar/classifier.hpp"
#include "radar/engine.hpp"
#include "radar/synthetic.hpp"

namespace radar
{
/// Labels every warm candidate of a replay by whether one planted burst
/// contributes more than half of its members.
inline std::vector<LabeledInstance> planted_instances(Pipeline& pipeline, const SyntheticStream& truth)
{
  std::vector<LabeledInstance> out;
  pipeline.run(std::nullopt, [&](const ShiftReport& r) {
    for (const auto& d : r.decisions)
    {
      if (!d.features)
      {
        continue;
      }
      std::vector<std::string> ids;
      ids.reserve(d.candidate.members.size());
      for (const auto& m : d.candidate.members)
      {
        ids.push_back(m->id);
      }
      out.push_back({std::vector<double>(d.features->values.begin(), d.features->values.end()),
                     majority_burst(ids, truth).has_value()});
    }
  });
  return out;
}

struct RecoveryScore
{
  std::size_t records = 0;
  std::size_t matched = 0;
  std::size_t bursts = 0;
  std::size_t bursts_found = 0;

  /// Zero when nothing was reported.
  double precision() const
  {
    return records == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(records);
  }
  double recall() const
  {
    return bursts == 0 ? 0.0 : static_cast<double>(bursts_found) / static_cast<double>(bursts);
  }
};

/// A record matches when a planted burst holds the majority of its members;
/// a burst is found when at least one record matches it.
inline RecoveryScore score_recovery(const EventStore& store, const SyntheticStream& truth)
{
  RecoveryScore s;
  s.bursts = truth.bursts.size();
  std::set<std::size_t> found;
  for (const auto& [id, record] : store.records())
  {
    ++s.records;
    std::vector<std::string> ids;
    for (const auto& t : record.members)
    {
      ids.push_back(t.id);
    }
    if (auto b = majority_burst(ids, truth))
    {
      ++s.matched;
      found.insert(*b);
    }
  }
  s.bursts_found = found.size();
  return s;
}

}  // namespace radar
