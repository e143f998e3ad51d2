#include "mf/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "mf/parallel.hpp"

namespace mf {

TaskIoLayout TaskIoLayout::make(const TaskSuite& suite, int task_index) {
  TaskIoLayout lay;
  lay.task_index = task_index;
  const auto& chans = suite.task_channels(task_index);
  for (const auto& c : chans) {
    lay.sensor_sig_ids.push_back(c.signature_id);
    lay.sensor_keys.push_back(
        signature_key(suite.vocab(), suite.signatures().at(c.signature_id)));
  }
  for (const auto& a : suite.task_actuators(task_index))
    lay.actuator_sig_ids.push_back(a.signature_id);
  lay.num_channels = static_cast<int>(lay.sensor_sig_ids.size());
  lay.num_actuators = static_cast<int>(lay.actuator_sig_ids.size());
  return lay;
}

void update_observation_stats(RunningStandardizer& stats,
                              const TaskIoLayout& layout,
                              const Observation& obs) {
  for (int c = 0; c < layout.num_channels; ++c)
    stats.update_only(layout.sensor_keys[static_cast<size_t>(c)],
                      obs.values[static_cast<size_t>(c)]);
}

void fill_token_row(TokenBatch& batch, int row, const TaskIoLayout& layout,
                    const WindowState& window,
                    const RunningStandardizer& stats) {
  int w = batch.window;
  check(window.window == w, "fill_token_row: window mismatch");
  check(layout.num_channels <= batch.max_tokens &&
            layout.num_actuators <= batch.max_actuators,
        "fill_token_row: row exceeds batch layout");
  for (int c = 0; c < layout.num_channels; ++c) {
    size_t slot = static_cast<size_t>(row) * batch.max_tokens + c;
    batch.sensor_mask[slot] = 1;
    batch.sensor_sig_ids[slot] = layout.sensor_sig_ids[static_cast<size_t>(c)];
    const auto& key = layout.sensor_keys[static_cast<size_t>(c)];
    for (int k = 0; k < w; ++k)
      batch.values[slot * w + k] = static_cast<float>(stats.apply(
          key, window.history[static_cast<size_t>(c) * w + k]));
  }
  for (int a = 0; a < layout.num_actuators; ++a) {
    size_t slot = static_cast<size_t>(row) * batch.max_actuators + a;
    batch.actuator_mask[slot] = 1;
    batch.actuator_sig_ids[slot] =
        layout.actuator_sig_ids[static_cast<size_t>(a)];
  }
  batch.task_ids[static_cast<size_t>(row)] = layout.task_index;
}

TokenBatch make_token_batch(
    const TaskSuite& suite,
    const std::vector<std::pair<const TaskIoLayout*, const WindowState*>>& rows,
    const RunningStandardizer& stats, int window, int min_tokens,
    int min_actuators) {
  int max_tokens = min_tokens, max_act = min_actuators;
  for (const auto& [lay, win] : rows) {
    max_tokens = std::max(max_tokens, lay->num_channels);
    max_act = std::max(max_act, lay->num_actuators);
  }
  TokenBatch batch;
  batch.resize(static_cast<int>(rows.size()), max_tokens, max_act, window);
  batch.signatures = &suite.signatures();
  for (size_t r = 0; r < rows.size(); ++r)
    fill_token_row(batch, static_cast<int>(r), *rows[r].first, *rows[r].second,
                   stats);
  return batch;
}

namespace {

// uniform view over transformer / mlp batch outputs
struct ForwardArrays {
  std::vector<float> mean_presquash, squashed, log_sigma, value;
  int q = 0;
};

ForwardArrays run_policy(const TransformerPolicy<float>& policy,
                         const MlpPolicy<float>* mlp, const TokenBatch& batch) {
  ForwardArrays out;
  out.q = batch.max_actuators;
  Tape<float> tape;
  tape.set_grad_enabled(false);
  if (mlp != nullptr) {
    std::vector<float> flat(batch.values.begin(), batch.values.end());
    check(static_cast<int>(flat.size() / batch.batch) == mlp->spec().max_flat_dim,
          "mlp rollout: flat dim drifted from the padded batch layout");
    auto fwd = mlp->forward(tape, flat, batch.task_ids, batch.batch);
    out.mean_presquash = fwd.pre_squash_mean.value();
    out.squashed = fwd.squashed_mean.value();
    out.log_sigma = fwd.log_sigma.value();
    out.value = fwd.value.value();
  } else {
    auto fwd = policy.forward(tape, batch);
    out.mean_presquash = fwd.pre_squash_mean.value();
    out.squashed = fwd.squashed_mean.value();
    out.log_sigma = fwd.log_sigma.value();
    out.value = fwd.value.value();
  }
  return out;
}

float logit_clamped(double a) {
  double c = std::clamp(a, 1e-6, 1.0 - 1e-6);
  return static_cast<float>(std::log(c / (1.0 - c)));
}

// Imitation targets live in squashed space, so a label sitting exactly on a
// boundary has no finite pre-squash optimum; the squashed-space MSE then
// drives logits past float saturation and its gradient dies. Keeping the
// targets slightly interior bounds every optimum near logit(0.98) ~ 3.9.
constexpr double kLabelClipLo = 0.02;
constexpr double kLabelClipHi = 0.98;

}  // namespace

CollectResult collect_rollout(const TaskSuite& suite,
                              const TransformerPolicy<float>& policy,
                              std::vector<EnvSlot>& slots,
                              RunningStandardizer& obs_stats,
                              ReturnNormalizer& reward_norm,
                              const TrainConfig& config, Rng& action_rng,
                              const MlpPolicy<float>* mlp, int min_tokens,
                              int min_actuators) {
  check(!slots.empty(), "collect_rollout: no environment slots");
  bool imitate = config.imitates();
  bool expert_acts = config.expert_rollout.value_or(false);
  if (expert_acts)
    check(imitate, "collect_rollout: expert rollout requires imitation");

  CollectResult result;
  result.buffer.steps = config.rollout_steps;
  result.buffer.traces.resize(slots.size());
  int window = policy.spec().window;
  for (size_t s = 0; s < slots.size(); ++s) {
    auto& trace = result.buffer.traces[s];
    trace.task_index = slots[s].layout.task_index;
    trace.num_actuators = slots[s].layout.num_actuators;
    trace.tokens_width = slots[s].layout.num_channels * window;
    size_t steps = static_cast<size_t>(config.rollout_steps);
    trace.token_values.reserve(steps * trace.tokens_width);
    trace.dones.assign(steps, 0);
    trace.bootstrap_values.assign(steps, 0.0f);
  }

  struct PendingAction {
    std::vector<double> applied;
    std::vector<float> presquash;
    float log_prob = 0.0f;
    std::vector<float> expert_label;
  };
  std::vector<PendingAction> pending(slots.size());
  std::vector<StepResult> step_results(slots.size());

  for (int t = 0; t < config.rollout_steps; ++t) {
    // batched student forward on every slot's current window
    std::vector<std::pair<const TaskIoLayout*, const WindowState*>> rows;
    rows.reserve(slots.size());
    for (auto& s : slots) rows.emplace_back(&s.layout, &s.window);
    TokenBatch batch = make_token_batch(suite, rows, obs_stats, window,
                                        min_tokens, min_actuators);
    ForwardArrays fwd = run_policy(policy, mlp, batch);

    // record inputs + choose actions (fixed slot order for reproducibility)
    for (size_t s = 0; s < slots.size(); ++s) {
      auto& slot = slots[s];
      auto& trace = result.buffer.traces[s];
      auto& act = pending[s];
      int q = fwd.q;
      int na = slot.layout.num_actuators;
      size_t row0 = s * static_cast<size_t>(batch.max_tokens);
      for (int c = 0; c < slot.layout.num_channels; ++c)
        for (int k = 0; k < window; ++k)
          trace.token_values.push_back(
              batch.values[(row0 + c) * static_cast<size_t>(window) + k]);

      ActionDistribution dist;
      dist.pre_squash_mean.resize(static_cast<size_t>(na));
      dist.mean.resize(static_cast<size_t>(na));
      dist.std.resize(static_cast<size_t>(na));
      for (int a = 0; a < na; ++a) {
        size_t i = s * static_cast<size_t>(q) + a;
        dist.pre_squash_mean[static_cast<size_t>(a)] = fwd.mean_presquash[i];
        dist.mean[static_cast<size_t>(a)] = fwd.squashed[i];
        dist.std[static_cast<size_t>(a)] =
            std::exp(fwd.log_sigma[i]);
      }

      if (imitate) {
        auto label = slot.expert->action(slot.current_obs);
        act.expert_label.resize(label.size());
        for (size_t a = 0; a < label.size(); ++a)
          act.expert_label[a] = static_cast<float>(
              std::clamp(label[a], kLabelClipLo, kLabelClipHi));
      } else {
        act.expert_label.clear();
      }

      if (expert_acts) {
        act.applied.assign(act.expert_label.begin(), act.expert_label.end());
        act.presquash.resize(act.applied.size());
        for (size_t a = 0; a < act.applied.size(); ++a)
          act.presquash[a] = logit_clamped(act.applied[a]);
      } else {
        auto sampled = sample_action(dist, action_rng);
        act.presquash = sampled.pre_squash;
        act.applied.assign(sampled.action.begin(), sampled.action.end());
      }
      act.log_prob = static_cast<float>(log_prob(dist, act.presquash));

      trace.mean_presquash.insert(trace.mean_presquash.end(),
                                  dist.pre_squash_mean.begin(),
                                  dist.pre_squash_mean.end());
      trace.actions_presquash.insert(trace.actions_presquash.end(),
                                     act.presquash.begin(),
                                     act.presquash.end());
      for (double a : act.applied)
        trace.actions_applied.push_back(static_cast<float>(a));
      if (imitate)
        trace.expert_actions.insert(trace.expert_actions.end(),
                                    act.expert_label.begin(),
                                    act.expert_label.end());
      trace.log_probs.push_back(act.log_prob);
      trace.values.push_back(fwd.value[s]);
    }

    // physics, parallel over slots (each slot is fully independent)
    parallel_for(static_cast<int>(slots.size()), config.workers, [&](int si) {
      auto& slot = slots[static_cast<size_t>(si)];
      try {
        step_results[static_cast<size_t>(si)] =
            slot.env->step(pending[static_cast<size_t>(si)].applied);
      } catch (const std::exception& e) {
        // drop the episode and restart the worker's env
        std::cerr << "env error on task " << slot.layout.task_index << ": "
                  << e.what() << "; episode dropped\n";
        StepResult r;
        r.obs = slot.env->reset(slot.next_reset_seed(config.seed));
        r.truncated = true;
        step_results[static_cast<size_t>(si)] = r;
      }
    });

    // sequential bookkeeping in slot order: rewards, stats, resets
    std::vector<size_t> need_bootstrap;
    std::vector<WindowState> boot_windows;
    for (size_t s = 0; s < slots.size(); ++s) {
      auto& slot = slots[s];
      auto& trace = result.buffer.traces[s];
      const auto& sr = step_results[s];
      bool done = sr.terminated || sr.truncated;
      double norm = reward_norm.normalize(slot.slot_index,
                                          slot.layout.task_index, sr.reward,
                                          done, /*training=*/true);
      if (!config.normalize_rewards) norm = sr.reward;
      trace.rewards_raw.push_back(static_cast<float>(sr.reward));
      trace.rewards_norm.push_back(static_cast<float>(norm));
      trace.dones[static_cast<size_t>(t)] = done ? 1 : 0;

      slot.episode_return_raw += sr.reward;
      slot.episode_solved_steps += sr.success ? 1 : 0;
      slot.episode_steps += 1;

      if (done) {
        if (sr.truncated && !sr.terminated) {
          need_bootstrap.push_back(s);
          WindowState bw = slot.window;  // history before the reset
          bw.push(sr.obs);
          boot_windows.push_back(std::move(bw));
        }
        result.episodes.push_back(
            {slot.layout.task_index, slot.episode_return_raw,
             slot.episode_steps > 0 ? static_cast<double>(slot.episode_solved_steps) /
                                          slot.episode_steps
                                    : 0.0});
        slot.episode_counter += 1;
        slot.episode_return_raw = 0.0;
        slot.episode_solved_steps = 0;
        slot.episode_steps = 0;
        slot.current_obs = slot.env->reset(slot.next_reset_seed(config.seed));
        if (slot.expert) slot.expert->reset();
        if (config.standardize_observations)
          update_observation_stats(obs_stats, slot.layout, slot.current_obs);
        slot.window.reset(slot.current_obs, window);
      } else {
        slot.current_obs = sr.obs;
        if (config.standardize_observations)
          update_observation_stats(obs_stats, slot.layout, slot.current_obs);
        slot.window.push(slot.current_obs);
      }
      result.env_steps += 1;
    }

    // bootstrap values for truncated episodes: pre-reset window advanced
    // with the final observation, evaluated under the current policy
    if (!need_bootstrap.empty()) {
      std::vector<std::pair<const TaskIoLayout*, const WindowState*>> boot_rows;
      for (size_t i = 0; i < need_bootstrap.size(); ++i)
        boot_rows.emplace_back(&slots[need_bootstrap[i]].layout,
                               &boot_windows[i]);
      TokenBatch bb = make_token_batch(suite, boot_rows, obs_stats, window,
                                       min_tokens, min_actuators);
      ForwardArrays bf = run_policy(policy, mlp, bb);
      for (size_t i = 0; i < need_bootstrap.size(); ++i)
        result.buffer.traces[need_bootstrap[i]]
            .bootstrap_values[static_cast<size_t>(t)] = bf.value[i];
    }
  }

  // final bootstrap for slots still mid-episode
  {
    std::vector<std::pair<const TaskIoLayout*, const WindowState*>> rows;
    for (auto& s : slots) rows.emplace_back(&s.layout, &s.window);
    TokenBatch batch = make_token_batch(suite, rows, obs_stats, window,
                                        min_tokens, min_actuators);
    ForwardArrays fwd = run_policy(policy, mlp, batch);
    for (size_t s = 0; s < slots.size(); ++s)
      result.buffer.traces[s].final_bootstrap = fwd.value[s];
  }
  return result;
}

}  // namespace mf
