#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mf/checkpoint.hpp"
#include "mf/evaluate.hpp"
#include "mf/losses.hpp"
#include "mf/rollout.hpp"

namespace mf {

struct TrainerOptions {
  const TaskSuite* suite = nullptr;
  PolicySpec policy_spec;
  TrainConfig config;
  std::vector<std::string> tasks;  // empty = whole catalog
  const ExpertRegistry* experts = nullptr;
  std::string out_dir;  // empty disables checkpoint/metrics files
  bool use_mlp = false;
  int mlp_hidden1 = 256;
  int mlp_hidden2 = 256;
  int mlp_task_embedding_dim = 16;
  bool quiet = false;
  // resume point for fine-tuning and distillation
  const CheckpointData* resume = nullptr;
};

struct PhaseMetricsRow {
  int phase = 0;
  std::string task;
  long long env_steps = 0;
  double mean_return = 0.0;
  double solved_fraction = 0.0;
  double imitation_mse = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double sigma_tilde = 0.0;
};

struct TrainOutcome {
  CheckpointData state;
  std::string checkpoint_path;  // empty when out_dir is empty
  std::string metrics_path;
  std::vector<PhaseMetricsRow> metrics;
  long long env_steps = 0;
};

// Alternating collect/optimize phases with the two-stage learning-rate
// schedule. Aborts on non-finite loss, keeping the last periodic checkpoint.
TrainOutcome train(const TrainerOptions& options);

// Single-task PPO from an OBC checkpoint: sigma is reset per the fine-tuning
// preset, imitation is replaced by policy-gradient and entropy terms, and the
// value head keeps training.
TrainOutcome finetune(const CheckpointData& base, const std::string& task,
                      TrainerOptions options);

struct DistillDecision {
  std::string task;
  double expert_solved = 0.0;
  double specialist_solved = 0.0;
  bool replaced = false;
};

struct DistillOutcome {
  TrainOutcome train;
  std::vector<DistillDecision> decisions;
};

// Continued OBC from the generalist; each task's expert is replaced by its
// specialist checkpoint only when the specialist evaluates at least as well.
DistillOutcome distill(const CheckpointData& generalist,
                       const std::map<std::string, std::string>& specialists,
                       TrainerOptions options, int compare_episodes = 100);

// Uniform env allocation with the relocation task doubled, scaled by `base`.
std::map<std::string, int> default_env_counts(
    const std::vector<std::string>& tasks, int base = 2);

std::string metrics_csv_header();
std::string metrics_csv_row(const PhaseMetricsRow& row);

}  // namespace mf
