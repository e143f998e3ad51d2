#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mf/ops.hpp"
#include "mf/policy.hpp"

namespace mf {

enum class Algo { ppo, bc, obc, obc_ppo, finetune };

std::string algo_name(Algo a);
Algo algo_from_name(const std::string& name);  // hard error on unknown

// One column of the training-method hyperparameter table plus desk-scale run
// settings. The per-algo preset cells are asserted one by one in tests; run
// settings may be overridden by the config file.
struct TrainConfig {
  Algo algo = Algo::obc;

  // preset cells
  double initial_std = 1.0;
  int batch_size = 128;
  double entropy_coef = 0.0;
  double value_coef = 0.5;
  double policy_gradient_coef = 0.0;
  double imitation_coef = 1.0;
  double initial_lr = 1e-3;
  std::optional<double> reduced_lr = 1e-5;   // empty = n/a
  int rollout_steps = 512;
  int epochs = 3;
  std::optional<bool> expert_rollout;        // empty = n/a (no imitation)
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_range = 0.2;
  double max_grad_norm = 0.5;
  bool standardize_advantage = true;
  bool standardize_observations = true;
  std::optional<std::string> imitation_loss; // "MSE" when imitating

  // run settings (desk-scale defaults; not part of the preset table)
  bool normalize_rewards = true;  // per-task return scaling
  bool reward_norm_per_task = true;
  uint64_t seed = 1;
  int workers = 1;
  long long total_steps = 2'000'000;
  long long reduced_lr_steps = 200'000;  // tail phase at the reduced rate
  std::map<std::string, int> env_counts; // task name -> parallel env count
  int eval_every_phases = 0;             // 0 disables periodic eval
  int eval_episodes = 20;
  int checkpoint_every_phases = 0;       // 0 = final only

  bool imitates() const { return imitation_coef > 0.0; }

  static TrainConfig preset(Algo algo);
};

// In-place standardization to zero mean, unit std (+1e-8 guard).
template <typename T>
void standardize_advantages(std::vector<T>& advantages) {
  if (advantages.size() < 2) return;
  double mean = 0.0;
  for (T a : advantages) mean += static_cast<double>(a);
  mean /= static_cast<double>(advantages.size());
  double var = 0.0;
  for (T a : advantages) {
    double d = static_cast<double>(a) - mean;
    var += d * d;
  }
  var /= static_cast<double>(advantages.size());
  double inv = 1.0 / (std::sqrt(var) + 1e-8);
  for (T& a : advantages)
    a = static_cast<T>((static_cast<double>(a) - mean) * inv);
}

// -inf-safe clipped surrogate: -mean(min(ratio * A, clip(ratio) * A)).
// Advantages arrive already standardized when the config asks for it.
template <typename T>
Tensor<T> ppo_surrogate(Tape<T>& t, const Tensor<T>& log_prob_new,
                        const Tensor<T>& log_prob_old,
                        const Tensor<T>& advantages, double clip) {
  auto ratio = t.exp(t.sub(log_prob_new, log_prob_old));
  auto clipped = t.clamp(ratio, static_cast<T>(1.0 - clip),
                         static_cast<T>(1.0 + clip));
  auto lhs = t.mul(ratio, advantages);
  auto rhs = t.mul(clipped, advantages);
  return t.scale(t.mean_all(t.elem_min(lhs, rhs)), T(-1));
}

// Everything combined_loss needs from a minibatch, already padded to
// [batch x max_actuators] alongside the TokenBatch.
template <typename T>
struct LossBatch {
  const TokenBatch* tokens = nullptr;
  std::vector<T> sampled_pre_squash;  // actions taken, pre-squash space
  std::vector<T> expert_actions;      // imitation targets, squashed space
  std::vector<T> old_log_probs;       // [batch]
  std::vector<T> advantages;          // [batch]
  std::vector<T> returns;             // [batch]
};

template <typename T>
struct LossTerms {
  Tensor<T> total;
  double policy_gradient = 0.0;
  double imitation = 0.0;
  double value = 0.0;
  double entropy = 0.0;
};

// loss = c_pg * surrogate + c_im * MSE(squashed mean, expert action)
//      + c_vf * MSE(value, return) + c_ent * (-entropy)
// Works on the head outputs directly so the flat baseline can share it.
template <typename T>
LossTerms<T> combined_loss_from_forward(Tape<T>& t,
                                        const Tensor<T>& pre_squash_mean,
                                        const Tensor<T>& squashed_mean,
                                        const Tensor<T>& log_sigma,
                                        const Tensor<T>& value,
                                        const LossBatch<T>& batch,
                                        const TrainConfig& config) {
  const TokenBatch& tokens = *batch.tokens;
  int b = tokens.batch;
  int q = tokens.max_actuators;

  LossTerms<T> terms;
  Tensor<T> total;

  auto returns = t.constant({b}, std::vector<T>(batch.returns));
  auto value_loss = t.mse(value, returns);
  terms.value = static_cast<double>(value_loss.scalar());
  total = t.scale(value_loss, static_cast<T>(config.value_coef));

  if (config.imitation_coef > 0.0) {
    auto expert = t.constant({b, q}, std::vector<T>(batch.expert_actions));
    auto imitation =
        t.mse_masked(squashed_mean, expert, tokens.actuator_mask);
    terms.imitation = static_cast<double>(imitation.scalar());
    total = t.add(total,
                  t.scale(imitation, static_cast<T>(config.imitation_coef)));
  }
  if (config.policy_gradient_coef > 0.0) {
    auto actions =
        t.constant({b, q}, std::vector<T>(batch.sampled_pre_squash));
    auto log_prob_new = t.gaussian_log_prob(pre_squash_mean, log_sigma,
                                            actions, tokens.actuator_mask);
    auto log_prob_old = t.constant({b}, std::vector<T>(batch.old_log_probs));
    auto advantages = t.constant({b}, std::vector<T>(batch.advantages));
    auto pg = ppo_surrogate(t, log_prob_new, log_prob_old, advantages,
                            config.clip_range);
    terms.policy_gradient = static_cast<double>(pg.scalar());
    total =
        t.add(total, t.scale(pg, static_cast<T>(config.policy_gradient_coef)));
  }
  {
    // Gaussian entropy per row: sum over valid actuators of
    // 0.5*(1 + log 2 pi) + log sigma
    constexpr double kHalfLog2PiE = 1.4189385332046727418;
    auto shifted =
        t.add(log_sigma, t.scalar_const(static_cast<T>(kHalfLog2PiE)));
    auto ent = t.mean_all(t.masked_sum_last(shifted, tokens.actuator_mask));
    terms.entropy = static_cast<double>(ent.scalar());
    if (config.entropy_coef > 0.0)
      total = t.add(total, t.scale(ent, static_cast<T>(-config.entropy_coef)));
  }
  terms.total = total;
  return terms;
}

template <typename T>
LossTerms<T> combined_loss(Tape<T>& t, const TransformerPolicy<T>& policy,
                           const LossBatch<T>& batch,
                           const TrainConfig& config) {
  auto fwd = policy.forward(t, *batch.tokens);
  return combined_loss_from_forward(t, fwd.pre_squash_mean, fwd.squashed_mean,
                                    fwd.log_sigma, fwd.value, batch, config);
}

}  // namespace mf
