#include "mf/losses.hpp"

namespace mf {

std::string algo_name(Algo a) {
  switch (a) {
    case Algo::ppo: return "ppo";
    case Algo::bc: return "bc";
    case Algo::obc: return "obc";
    case Algo::obc_ppo: return "obc-ppo";
    case Algo::finetune: return "finetune";
  }
  return "?";
}

Algo algo_from_name(const std::string& name) {
  if (name == "ppo") return Algo::ppo;
  if (name == "bc") return Algo::bc;
  if (name == "obc") return Algo::obc;
  if (name == "obc-ppo") return Algo::obc_ppo;
  if (name == "finetune") return Algo::finetune;
  fail("unknown algorithm \"", name, "\"; expected ppo|bc|obc|obc-ppo|finetune");
}

TrainConfig TrainConfig::preset(Algo algo) {
  TrainConfig c;
  c.algo = algo;
  // cells shared by every column
  c.batch_size = 128;
  c.value_coef = 0.5;
  c.rollout_steps = 512;
  c.epochs = 3;
  c.gamma = 0.99;
  c.gae_lambda = 0.95;
  c.clip_range = 0.2;
  c.max_grad_norm = 0.5;
  c.standardize_advantage = true;
  c.standardize_observations = true;
  switch (algo) {
    case Algo::ppo:
      c.initial_std = 1.0;
      c.entropy_coef = 1e-6;
      c.policy_gradient_coef = 1.0;
      c.imitation_coef = 0.0;
      c.initial_lr = 2e-5;
      c.reduced_lr.reset();
      c.expert_rollout.reset();
      c.imitation_loss.reset();
      break;
    case Algo::bc:
      c.initial_std = 1.0;
      c.entropy_coef = 0.0;
      c.policy_gradient_coef = 0.0;
      c.imitation_coef = 1.0;
      c.initial_lr = 1e-3;
      c.reduced_lr = 1e-5;
      c.expert_rollout = true;
      c.imitation_loss = "MSE";
      break;
    case Algo::obc:
      c.initial_std = 1.0;
      c.entropy_coef = 0.0;
      c.policy_gradient_coef = 0.0;
      c.imitation_coef = 1.0;
      c.initial_lr = 1e-3;
      c.reduced_lr = 1e-5;
      c.expert_rollout = false;
      c.imitation_loss = "MSE";
      break;
    case Algo::obc_ppo:
      c.initial_std = 1.0;
      c.entropy_coef = 1e-6;
      c.policy_gradient_coef = 1.0;
      c.imitation_coef = 1.0;
      c.initial_lr = 1e-4;
      c.reduced_lr = 1e-5;
      c.expert_rollout = false;
      c.imitation_loss = "MSE";
      break;
    case Algo::finetune:
      c.initial_std = 1e-3;
      c.entropy_coef = 1e-6;
      c.policy_gradient_coef = 1.0;
      c.imitation_coef = 0.0;
      c.initial_lr = 2e-6;
      c.reduced_lr.reset();
      c.expert_rollout.reset();
      c.imitation_loss.reset();
      break;
  }
  return c;
}

}  // namespace mf
