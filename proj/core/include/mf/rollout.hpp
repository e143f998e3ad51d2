#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mf/experts.hpp"
#include "mf/mlp_policy.hpp"
#include "mf/losses.hpp"
#include "mf/policy.hpp"
#include "mf/sim.hpp"
#include "mf/standardizer.hpp"

namespace mf {

// Static per-task wiring between env channels, signatures and standardizer
// keys, resolved once.
struct TaskIoLayout {
  int task_index = -1;
  std::vector<int> sensor_sig_ids;
  std::vector<std::string> sensor_keys;  // standardizer key per channel
  std::vector<int> actuator_sig_ids;
  int num_channels = 0;
  int num_actuators = 0;

  static TaskIoLayout make(const TaskSuite& suite, int task_index);
};

// W-step rolling history per channel. At episode start every slot repeats
// the first observed value.
struct WindowState {
  int window = 5;
  int channels = 0;
  std::vector<double> history;  // channels x window, oldest..newest

  void reset(const Observation& first, int window_steps) {
    window = window_steps;
    channels = static_cast<int>(first.values.size());
    history.resize(static_cast<size_t>(channels) * window);
    for (int c = 0; c < channels; ++c)
      for (int w = 0; w < window; ++w)
        history[static_cast<size_t>(c) * window + w] =
            first.values[static_cast<size_t>(c)];
  }
  void push(const Observation& obs) {
    for (int c = 0; c < channels; ++c) {
      double* row = history.data() + static_cast<size_t>(c) * window;
      for (int w = 0; w + 1 < window; ++w) row[w] = row[w + 1];
      row[window - 1] = obs.values[static_cast<size_t>(c)];
    }
  }
};

// Welford-update the standardizer with the newest raw value of every channel.
void update_observation_stats(RunningStandardizer& stats,
                              const TaskIoLayout& layout,
                              const Observation& obs);

// One batch row from a window, standardized with the current statistics.
void fill_token_row(TokenBatch& batch, int row, const TaskIoLayout& layout,
                    const WindowState& window,
                    const RunningStandardizer& stats);

// Batch over heterogeneous rows. `min_tokens`/`min_actuators` force a fixed
// padded width (the MLP baseline needs a stable flat layout).
TokenBatch make_token_batch(
    const TaskSuite& suite,
    const std::vector<std::pair<const TaskIoLayout*, const WindowState*>>& rows,
    const RunningStandardizer& stats, int window, int min_tokens = 0,
    int min_actuators = 0);

// On-policy transition store, one trace per environment slot. Only
// transitions generated under the current policy snapshot (or the expert,
// for BC) are ever present.
struct EnvTrace {
  int task_index = -1;
  int num_actuators = 0;
  int tokens_width = 0;  // channels * window floats per step
  std::vector<float> token_values;
  std::vector<float> actions_presquash;
  std::vector<float> actions_applied;
  std::vector<float> expert_actions;  // empty unless imitating
  std::vector<float> mean_presquash;
  std::vector<float> log_probs;
  std::vector<float> values;
  std::vector<float> rewards_raw;
  std::vector<float> rewards_norm;
  std::vector<uint8_t> dones;
  std::vector<float> bootstrap_values;
  std::vector<float> advantages;
  std::vector<float> returns;
  float final_bootstrap = 0.0f;  // value after the last step, mid-episode
};

struct RolloutBuffer {
  std::vector<EnvTrace> traces;
  int steps = 0;
  size_t size() const { return static_cast<size_t>(steps) * traces.size(); }
};

struct EpisodeStat {
  int task_index = -1;
  double return_raw = 0.0;
  double solved_fraction = 0.0;
};

// Persistent per-environment state owned by the trainer; episodes span
// collection phases.
struct EnvSlot {
  std::unique_ptr<Env> env;
  std::unique_ptr<Expert> expert;  // null when not imitating
  TaskIoLayout layout;
  WindowState window;
  Observation current_obs;
  uint64_t episode_counter = 0;
  double episode_return_raw = 0.0;
  int episode_solved_steps = 0;
  int episode_steps = 0;
  int slot_index = 0;

  uint64_t next_reset_seed(uint64_t run_seed) const {
    return fnv1a64(format_msg("reset/", slot_index, "/", episode_counter)) ^
           run_seed;
  }
};

struct CollectResult {
  RolloutBuffer buffer;
  std::vector<EpisodeStat> episodes;
  long long env_steps = 0;
};

// Collects config.rollout_steps transitions from every slot. The acting
// policy is the student (expert for BC); when imitating, the expert labels
// every visited state. Slots persist across calls.
CollectResult collect_rollout(const TaskSuite& suite,
                              const TransformerPolicy<float>& policy,
                              std::vector<EnvSlot>& slots,
                              RunningStandardizer& obs_stats,
                              ReturnNormalizer& reward_norm,
                              const TrainConfig& config, Rng& action_rng,
                              const MlpPolicy<float>* mlp = nullptr,
                              int min_tokens = 0, int min_actuators = 0);

}  // namespace mf
