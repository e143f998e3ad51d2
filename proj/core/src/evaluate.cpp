#include "mf/evaluate.hpp"

#include <cmath>

#include "mf/parallel.hpp"

namespace mf {

void EvalReport::finalize() {
  episodes = static_cast<int>(per_episode_return.size());
  if (episodes == 0) return;
  double rsum = 0, ssum = 0;
  for (double r : per_episode_return) rsum += r;
  for (double s : per_episode_solved) ssum += s;
  mean_return = rsum / episodes;
  solved_fraction = ssum / episodes;
  double rvar = 0, svar = 0;
  for (double r : per_episode_return) rvar += (r - mean_return) * (r - mean_return);
  for (double s : per_episode_solved)
    svar += (s - solved_fraction) * (s - solved_fraction);
  if (episodes > 1) {
    return_se = std::sqrt(rvar / (episodes - 1)) / std::sqrt(episodes);
    solved_se = std::sqrt(svar / (episodes - 1)) / std::sqrt(episodes);
  }
}

namespace {

struct EpisodeOutcome {
  double episode_return = 0.0;
  double solved = 0.0;
  std::vector<float> actions;
};

template <typename ActFn>
EpisodeOutcome run_episode(const TaskSuite& suite, int task_index,
                           uint64_t reset_seed, const EvalOptions& options,
                           ActFn&& act) {
  EpisodeOutcome out;
  auto env = suite.make_env(task_index);
  const auto& task = suite.tasks()[static_cast<size_t>(task_index)];
  Observation obs = env->reset(reset_seed);
  int solved_steps = 0, steps = 0;
  for (int t = 0; t < task.max_steps; ++t) {
    std::vector<double> action = act(obs, *env);
    if (options.action_transform) action = options.action_transform(action);
    if (options.record_actions)
      for (double a : action)
        out.actions.push_back(
            static_cast<float>(std::clamp(a, 0.0, 1.0)));
    auto sr = env->step(action);
    out.episode_return += sr.reward;
    solved_steps += sr.success ? 1 : 0;
    steps += 1;
    obs = sr.obs;
    if (sr.truncated || sr.terminated) break;
  }
  out.solved = steps > 0 ? static_cast<double>(solved_steps) / steps : 0.0;
  return out;
}

uint64_t episode_seed(uint64_t base, int episode) {
  return fnv1a64(format_msg("eval/", episode)) ^ base;
}

}  // namespace

EvalReport evaluate_policy(const TaskSuite& suite,
                           const TransformerPolicy<float>& policy,
                           const RunningStandardizer& frozen_stats,
                           const std::string& task_name,
                           const EvalOptions& options) {
  int ti = suite.task_index(task_name);
  TaskIoLayout layout = TaskIoLayout::make(suite, ti);
  int window = policy.spec().window;

  std::vector<EpisodeOutcome> outcomes(static_cast<size_t>(options.episodes));
  parallel_for(options.episodes, options.workers, [&](int ep) {
    WindowState win;
    bool first = true;
    Rng noise(episode_seed(options.seed, ep) ^ 0xa5a5a5a5ull);
    outcomes[static_cast<size_t>(ep)] = run_episode(
        suite, ti, episode_seed(options.seed, ep), options,
        [&](const Observation& obs, const Env&) {
          if (first) {
            win.reset(obs, window);
            first = false;
          } else {
            win.push(obs);
          }
          TokenBatch batch = make_token_batch(suite, {{&layout, &win}},
                                              frozen_stats, window);
          auto dists = policy.action_distributions(batch);
          SampledAction sa = options.deterministic
                                 ? deterministic_action(dists[0])
                                 : sample_action(dists[0], noise);
          return std::vector<double>(sa.action.begin(), sa.action.end());
        });
  });

  EvalReport report;
  for (auto& o : outcomes) {
    report.per_episode_return.push_back(o.episode_return);
    report.per_episode_solved.push_back(o.solved);
    if (options.record_actions) report.actions.push_back(std::move(o.actions));
  }
  report.finalize();
  return report;
}

EvalReport evaluate_expert(const TaskSuite& suite, const Expert& prototype,
                           const std::string& task_name,
                           const EvalOptions& options) {
  int ti = suite.task_index(task_name);
  std::vector<EpisodeOutcome> outcomes(static_cast<size_t>(options.episodes));
  parallel_for(options.episodes, options.workers, [&](int ep) {
    auto expert = prototype.clone();
    expert->reset();
    outcomes[static_cast<size_t>(ep)] =
        run_episode(suite, ti, episode_seed(options.seed, ep), options,
                    [&](const Observation& obs, const Env&) {
                      return expert->action(obs);
                    });
  });
  EvalReport report;
  for (auto& o : outcomes) {
    report.per_episode_return.push_back(o.episode_return);
    report.per_episode_solved.push_back(o.solved);
    if (options.record_actions) report.actions.push_back(std::move(o.actions));
  }
  report.finalize();
  return report;
}

}  // namespace mf
