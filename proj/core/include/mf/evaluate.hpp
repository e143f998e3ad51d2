#pragma once

#include <functional>
#include <vector>

#include "mf/experts.hpp"
#include "mf/rollout.hpp"

namespace mf {

struct EvalOptions {
  int episodes = 200;
  uint64_t seed = 0;
  int workers = 1;
  bool deterministic = true;  // mean actions; frozen standardizers
  bool record_actions = false;
  // applied to each action before the env sees it (e.g. subspace projection)
  std::function<std::vector<double>(const std::vector<double>&)>
      action_transform;
};

struct EvalReport {
  int episodes = 0;
  double mean_return = 0.0;
  double return_se = 0.0;
  double solved_fraction = 0.0;
  double solved_se = 0.0;
  std::vector<double> per_episode_return;
  std::vector<double> per_episode_solved;
  // episode-major applied actions, steps x action_dim each
  std::vector<std::vector<float>> actions;

  void finalize();
};

EvalReport evaluate_policy(const TaskSuite& suite,
                           const TransformerPolicy<float>& policy,
                           const RunningStandardizer& frozen_stats,
                           const std::string& task_name,
                           const EvalOptions& options);

EvalReport evaluate_expert(const TaskSuite& suite, const Expert& prototype,
                           const std::string& task_name,
                           const EvalOptions& options);

}  // namespace mf
