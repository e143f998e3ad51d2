#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mf/util.hpp"

namespace mf {

// Welford running statistics for one stream.
struct Welford {
  double count = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void update(double x) {
    count += 1.0;
    double delta = x - mean;
    mean += delta / count;
    m2 += delta * (x - mean);
  }
  double variance() const { return count > 0 ? m2 / count : 0.0; }
};

// Per-signature observation standardizer. Keys are canonical signature keys,
// shared across tasks; the disjoint-vocabulary ablation produces distinct
// keys upstream. Statistics update only while training and are frozen at
// evaluation time.
class RunningStandardizer {
 public:
  static constexpr double kEpsilon = 1e-8;
  static constexpr double kClip = 10.0;

  double standardize(const std::string& key, double value, bool training) {
    auto& w = stats_[key];
    if (training) w.update(value);
    return apply(w, value);
  }

  // standardize with current statistics, never updating
  double apply(const std::string& key, double value) const {
    auto it = stats_.find(key);
    if (it == stats_.end()) return clamp_(value);
    return apply(it->second, value);
  }

  void update_only(const std::string& key, double value) {
    stats_[key].update(value);
  }

  const std::map<std::string, Welford>& stats() const { return stats_; }
  std::map<std::string, Welford>& stats() { return stats_; }
  bool has(const std::string& key) const { return stats_.count(key) > 0; }

 private:
  static double clamp_(double v) {
    return v < -kClip ? -kClip : (v > kClip ? kClip : v);
  }
  static double apply(const Welford& w, double value) {
    double std = std::sqrt(w.variance() + kEpsilon);
    return clamp_((value - w.mean) / std);
  }

  std::map<std::string, Welford> stats_;  // ordered for stable serialization
};

// Scales rewards by the running standard deviation of the per-task
// discounted return. Each environment instance owns an accumulator; the
// statistics pool per task (or globally, for the ablation). Raw rewards are
// kept by the caller for metrics.
class ReturnNormalizer {
 public:
  static constexpr double kEpsilon = 1e-8;
  static constexpr double kClip = 10.0;

  explicit ReturnNormalizer(double gamma = 0.99, bool per_task = true)
      : gamma_(gamma), per_task_(per_task) {}

  // env_slot identifies the environment instance, task_id the statistics
  // bucket. Call once per transition, in a fixed env order.
  double normalize(int env_slot, int task_id, double reward, bool done,
                   bool training) {
    if (static_cast<size_t>(env_slot) >= accumulators_.size())
      accumulators_.resize(static_cast<size_t>(env_slot) + 1, 0.0);
    int bucket = per_task_ ? task_id : 0;
    auto& acc = accumulators_[static_cast<size_t>(env_slot)];
    acc = gamma_ * acc + reward;
    if (training) stats_[bucket].update(acc);
    double denom =
        std::sqrt(stats_[bucket].variance()) + kEpsilon;
    // clipped so the cold-start std estimate cannot blow up value targets
    double normalized =
        std::clamp(reward / denom, -kClip, kClip);
    if (done) acc = 0.0;
    return normalized;
  }

  const std::map<int, Welford>& stats() const { return stats_; }
  std::map<int, Welford>& stats() { return stats_; }
  double gamma() const { return gamma_; }
  bool per_task() const { return per_task_; }

 private:
  double gamma_;
  bool per_task_;
  std::vector<double> accumulators_;
  std::map<int, Welford> stats_;
};

}  // namespace mf
