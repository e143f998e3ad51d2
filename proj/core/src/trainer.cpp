#include "mf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "mf/gae.hpp"

namespace mf {

namespace fs = std::filesystem;

std::map<std::string, int> default_env_counts(
    const std::vector<std::string>& tasks, int base) {
  std::map<std::string, int> counts;
  for (const auto& t : tasks) counts[t] = t == "RelocateLite" ? 2 * base : base;
  return counts;
}

std::string metrics_csv_header() {
  return "phase,task,env_steps,mean_return,solved_fraction,imitation_mse,"
         "value_loss,entropy,sigma_tilde";
}

std::string metrics_csv_row(const PhaseMetricsRow& r) {
  std::ostringstream os;
  os.precision(10);
  os << r.phase << ',' << r.task << ',' << r.env_steps << ',' << r.mean_return
     << ',' << r.solved_fraction << ',' << r.imitation_mse << ','
     << r.value_loss << ',' << r.entropy << ',' << r.sigma_tilde;
  return os.str();
}

namespace {

void echo_preset(const TrainConfig& c) {
  std::cerr << "preset " << algo_name(c.algo) << ": initial_std "
            << c.initial_std << ", batch " << c.batch_size << ", ent "
            << c.entropy_coef << ", vf " << c.value_coef << ", pg "
            << c.policy_gradient_coef << ", im " << c.imitation_coef << ", lr "
            << c.initial_lr << ", reduced_lr "
            << (c.reduced_lr ? std::to_string(*c.reduced_lr) : "n/a")
            << ", rollout " << c.rollout_steps << ", epochs " << c.epochs
            << ", expert_rollout "
            << (c.expert_rollout ? (*c.expert_rollout ? "yes" : "no") : "n/a")
            << ", gamma " << c.gamma << ", lambda " << c.gae_lambda << ", clip "
            << c.clip_range << ", max_grad_norm " << c.max_grad_norm
            << ", std_adv " << c.standardize_advantage << ", std_obs "
            << c.standardize_observations << "\n";
}

struct MiniBatchRef {
  int trace = 0;
  int step = 0;
};

// builds the token batch + loss arrays for one minibatch of buffer entries
template <typename T>
void build_minibatch(const TaskSuite& suite, const RolloutBuffer& buffer,
                     const std::vector<TaskIoLayout>& layouts,
                     const std::vector<MiniBatchRef>& refs, int window,
                     bool standardize_advantage, int min_tokens,
                     int min_actuators, TokenBatch& tokens,
                     LossBatch<T>& loss) {
  int b = static_cast<int>(refs.size());
  int max_tokens = min_tokens, max_act = min_actuators;
  for (const auto& ref : refs) {
    const auto& lay = layouts[static_cast<size_t>(ref.trace)];
    max_tokens = std::max(max_tokens, lay.num_channels);
    max_act = std::max(max_act, lay.num_actuators);
  }
  tokens.resize(b, max_tokens, max_act, window);
  tokens.signatures = &suite.signatures();
  loss.sampled_pre_squash.assign(static_cast<size_t>(b) * max_act, T(0));
  loss.expert_actions.assign(static_cast<size_t>(b) * max_act, T(0));
  loss.old_log_probs.assign(static_cast<size_t>(b), T(0));
  loss.advantages.assign(static_cast<size_t>(b), T(0));
  loss.returns.assign(static_cast<size_t>(b), T(0));

  for (int r = 0; r < b; ++r) {
    const auto& ref = refs[static_cast<size_t>(r)];
    const auto& trace = buffer.traces[static_cast<size_t>(ref.trace)];
    const auto& lay = layouts[static_cast<size_t>(ref.trace)];
    size_t base = static_cast<size_t>(ref.step) * trace.tokens_width;
    for (int c = 0; c < lay.num_channels; ++c) {
      size_t slot = static_cast<size_t>(r) * max_tokens + c;
      tokens.sensor_mask[slot] = 1;
      tokens.sensor_sig_ids[slot] = lay.sensor_sig_ids[static_cast<size_t>(c)];
      for (int k = 0; k < window; ++k)
        tokens.values[slot * window + k] =
            trace.token_values[base + static_cast<size_t>(c) * window + k];
    }
    int na = lay.num_actuators;
    for (int a = 0; a < na; ++a) {
      size_t slot = static_cast<size_t>(r) * max_act + a;
      tokens.actuator_mask[slot] = 1;
      tokens.actuator_sig_ids[slot] =
          lay.actuator_sig_ids[static_cast<size_t>(a)];
      size_t src = static_cast<size_t>(ref.step) * na + a;
      loss.sampled_pre_squash[slot] =
          static_cast<T>(trace.actions_presquash[src]);
      if (!trace.expert_actions.empty())
        loss.expert_actions[slot] = static_cast<T>(trace.expert_actions[src]);
    }
    tokens.task_ids[static_cast<size_t>(r)] = lay.task_index;
    loss.old_log_probs[static_cast<size_t>(r)] =
        static_cast<T>(trace.log_probs[static_cast<size_t>(ref.step)]);
    loss.advantages[static_cast<size_t>(r)] =
        static_cast<T>(trace.advantages[static_cast<size_t>(ref.step)]);
    loss.returns[static_cast<size_t>(r)] =
        static_cast<T>(trace.returns[static_cast<size_t>(ref.step)]);
  }
  if (standardize_advantage) standardize_advantages(loss.advantages);
  loss.tokens = &tokens;
}

struct TaskPhaseAccum {
  double return_sum = 0.0;
  double solved_sum = 0.0;
  int episodes = 0;
  double imitation_sq = 0.0;
  double value_sq = 0.0;
  long long loss_samples = 0;
};

}  // namespace

TrainOutcome train(const TrainerOptions& options) {
  check(options.suite != nullptr, "train: no task suite");
  const TaskSuite& suite = *options.suite;
  TrainConfig config = options.config;
  std::vector<std::string> tasks = options.tasks;
  if (tasks.empty())
    for (const auto& t : suite.tasks()) tasks.push_back(t.name);
  for (const auto& t : tasks) suite.task_index(t);  // validates names

  if (config.env_counts.empty())
    config.env_counts = default_env_counts(tasks);
  if (!options.quiet) echo_preset(config);
  if (config.imitates())
    check(options.experts != nullptr,
          "train: imitation preset requires an expert registry");

  TrainOutcome outcome;
  auto& state = outcome.state;
  state.algo = algo_name(config.algo);
  state.seed = config.seed;
  state.tasks = tasks;
  state.disjoint_vocabulary = suite.disjoint_vocabulary();
  state.reward_gamma = config.gamma;
  state.reward_per_task = config.reward_norm_per_task;
  state.vocab_words = suite.vocab().words();
  state.spec = options.policy_spec;

  // policy: fresh or resumed
  if (options.resume != nullptr) {
    check(options.resume->policy_kind == "transformer",
          "train: can only resume transformer checkpoints");
    check(options.resume->vocab_words == suite.vocab().words(),
          "train: resumed checkpoint vocabulary differs from the suite");
    state.spec = options.resume->spec;
    state.policy = std::make_shared<TransformerPolicy<float>>(
        *options.resume->policy);
    state.obs_stats = options.resume->obs_stats;
    state.env_steps = 0;
  } else {
    Vocabulary vocab = Vocabulary::from_words(state.vocab_words);
    state.spec.initial_std = config.initial_std;
    state.policy = std::make_shared<TransformerPolicy<float>>(
        vocab, state.spec, config.seed);
  }
  state.policy->reset_sigma_tilde(config.initial_std);

  // mlp baseline shares the padded token layout as its flat input
  int global_max_tokens = 0, global_max_act = 0;
  std::vector<TaskIoLayout> task_layouts;
  for (const auto& t : tasks) {
    auto lay = TaskIoLayout::make(suite, suite.task_index(t));
    global_max_tokens = std::max(global_max_tokens, lay.num_channels);
    global_max_act = std::max(global_max_act, lay.num_actuators);
    task_layouts.push_back(std::move(lay));
  }
  int min_tokens = 0, min_act = 0;
  if (options.use_mlp) {
    MlpSpec ms;
    ms.max_flat_dim = global_max_tokens * options.policy_spec.window;
    ms.max_actions = global_max_act;
    ms.num_tasks = static_cast<int>(suite.tasks().size());
    ms.task_embedding_dim = options.mlp_task_embedding_dim;
    ms.hidden1 = options.mlp_hidden1;
    ms.hidden2 = options.mlp_hidden2;
    ms.initial_std = config.initial_std;
    state.mlp = std::make_shared<MlpPolicy<float>>(ms, config.seed);
    state.mlp_spec = ms;
    state.policy_kind = "mlp";
    min_tokens = global_max_tokens;
    min_act = global_max_act;
  }

  ReturnNormalizer reward_norm(config.gamma, config.reward_norm_per_task);
  if (options.resume != nullptr) {
    reward_norm = ReturnNormalizer(options.resume->reward_gamma,
                                   config.reward_norm_per_task);
    reward_norm.stats() = options.resume->reward_stats;
  }

  // environment slots, grouped by task in catalog order
  std::vector<EnvSlot> slots;
  for (size_t li = 0; li < tasks.size(); ++li) {
    int ti = suite.task_index(tasks[li]);
    int count = config.env_counts.at(tasks[li]);
    for (int k = 0; k < count; ++k) {
      EnvSlot slot;
      slot.env = suite.make_env(ti);
      slot.layout = task_layouts[li];
      slot.slot_index = static_cast<int>(slots.size());
      if (options.experts != nullptr && config.imitates())
        slot.expert = options.experts->make(suite, ti);
      slots.push_back(std::move(slot));
    }
  }
  for (auto& slot : slots) {
    slot.current_obs = slot.env->reset(slot.next_reset_seed(config.seed));
    slot.episode_counter += 1;
    if (config.standardize_observations)
      update_observation_stats(state.obs_stats, slot.layout, slot.current_obs);
    slot.window.reset(slot.current_obs, state.spec.window);
  }

  ParamSet<float> params =
      options.use_mlp ? state.mlp->parameters() : state.policy->parameters();
  AdamState<float> adam;
  adam.lr = static_cast<float>(config.initial_lr);
  adam.init(params);

  Rng action_rng = Rng::derive(config.seed, "rollout-actions");
  Rng shuffle_rng = Rng::derive(config.seed, "minibatch-shuffle");

  std::ofstream metrics_file;
  if (!options.out_dir.empty()) {
    fs::create_directories(options.out_dir);
    outcome.metrics_path = options.out_dir + "/metrics.csv";
    metrics_file.open(outcome.metrics_path);
    metrics_file << metrics_csv_header() << "\n";
  }
  std::string last_checkpoint;
  auto save_state = [&](const std::string& name) {
    if (options.out_dir.empty()) return std::string();
    state.reward_stats = reward_norm.stats();
    std::string path = options.out_dir + "/" + name;
    save_checkpoint(path, state);
    return path;
  };

  long long steps_per_phase =
      static_cast<long long>(config.rollout_steps) * static_cast<long long>(slots.size());
  long long main_steps = config.total_steps - config.reduced_lr_steps;
  int phase = 0;
  bool reduced_applied = false;

  while (state.env_steps < config.total_steps) {
    phase += 1;
    if (config.reduced_lr && !reduced_applied && state.env_steps >= main_steps) {
      adam.lr = static_cast<float>(*config.reduced_lr);
      reduced_applied = true;
      if (!options.quiet)
        std::cerr << "phase " << phase << ": learning rate reduced to "
                  << *config.reduced_lr << "\n";
    }

    auto collected = collect_rollout(suite, *state.policy, slots,
                                     state.obs_stats, reward_norm, config,
                                     action_rng, state.mlp.get(), min_tokens,
                                     min_act);
    state.env_steps += collected.env_steps;
    check(collected.buffer.size() ==
              static_cast<size_t>(config.rollout_steps) * slots.size(),
          "rollout buffer size drifted");

    // GAE per trace over the normalized rewards
    for (auto& trace : collected.buffer.traces) {
      std::vector<double> rewards(trace.rewards_norm.begin(),
                                  trace.rewards_norm.end());
      std::vector<double> values(trace.values.begin(), trace.values.end());
      std::vector<double> boots(trace.bootstrap_values.begin(),
                                trace.bootstrap_values.end());
      auto res = gae(rewards, values, trace.dones, boots,
                     trace.final_bootstrap, config.gamma, config.gae_lambda);
      trace.advantages.assign(res.advantages.begin(), res.advantages.end());
      trace.returns.assign(res.returns.begin(), res.returns.end());
    }

    // per-task episode aggregates for the metrics stream
    std::map<int, TaskPhaseAccum> accum;
    for (const auto& ep : collected.episodes) {
      auto& a = accum[ep.task_index];
      a.return_sum += ep.return_raw;
      a.solved_sum += ep.solved_fraction;
      a.episodes += 1;
    }

    // optimization: epochs x shuffled minibatches
    std::vector<MiniBatchRef> order;
    order.reserve(collected.buffer.size());
    for (size_t tr = 0; tr < collected.buffer.traces.size(); ++tr)
      for (int st = 0; st < collected.buffer.steps; ++st)
        order.push_back({static_cast<int>(tr), st});
    std::vector<TaskIoLayout> trace_layouts;
    for (const auto& slot : slots) trace_layouts.push_back(slot.layout);

    double entropy_last = 0.0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      shuffle_rng.shuffle(order.begin(), order.end());
      size_t nb = order.size() / static_cast<size_t>(config.batch_size);
      for (size_t mb = 0; mb < nb; ++mb) {
        std::vector<MiniBatchRef> refs(
            order.begin() + static_cast<long>(mb * config.batch_size),
            order.begin() + static_cast<long>((mb + 1) * config.batch_size));
        TokenBatch tokens;
        LossBatch<float> lb;
        build_minibatch(suite, collected.buffer, trace_layouts, refs,
                        state.spec.window, config.standardize_advantage,
                        min_tokens, min_act, tokens, lb);
        Tape<float> tape;
        LossTerms<float> terms;
        if (options.use_mlp) {
          std::vector<float> flat(tokens.values.begin(), tokens.values.end());
          auto fwd = state.mlp->forward(tape, flat, tokens.task_ids,
                                        tokens.batch);
          terms = combined_loss_from_forward<float>(
              tape, fwd.pre_squash_mean, fwd.squashed_mean, fwd.log_sigma,
              fwd.value, lb, config);
        } else {
          terms = combined_loss(tape, *state.policy, lb, config);
        }
        double loss_value = static_cast<double>(terms.total.scalar());
        if (!std::isfinite(loss_value)) {
          save_state("checkpoint_abort.mfck");
          fail("non-finite loss at phase ", phase, "; last good checkpoint: ",
               last_checkpoint.empty() ? "(none)" : last_checkpoint);
        }
        params.zero_grad();
        tape.backward(terms.total);
        if (!options.use_mlp) state.policy->embedding().zero_padding_grad();
        adam_step(adam, params, static_cast<float>(config.max_grad_norm));
        entropy_last = terms.entropy;

        if (epoch == 0) {
          // batch-mean losses attributed to the tasks present in the batch
          for (int r = 0; r < tokens.batch; ++r) {
            auto& a = accum[tokens.task_ids[static_cast<size_t>(r)]];
            a.value_sq += terms.value;
            a.imitation_sq += terms.imitation;
            a.loss_samples += 1;
          }
        }
      }
    }

    // metrics rows, one per task per phase
    for (size_t li = 0; li < tasks.size(); ++li) {
      int ti = suite.task_index(tasks[li]);
      PhaseMetricsRow row;
      row.phase = phase;
      row.task = tasks[li];
      row.env_steps = state.env_steps;
      auto it = accum.find(ti);
      if (it != accum.end() && it->second.episodes > 0) {
        row.mean_return = it->second.return_sum / it->second.episodes;
        row.solved_fraction = it->second.solved_sum / it->second.episodes;
      }
      if (it != accum.end() && it->second.loss_samples > 0) {
        row.imitation_mse = it->second.imitation_sq / it->second.loss_samples;
        row.value_loss = it->second.value_sq / it->second.loss_samples;
      }
      row.entropy = entropy_last;
      row.sigma_tilde = options.use_mlp ? 0.0 : state.policy->sigma_tilde();
      outcome.metrics.push_back(row);
      if (metrics_file.is_open())
        metrics_file << metrics_csv_row(row) << "\n";
    }
    if (metrics_file.is_open()) metrics_file.flush();

    if (config.checkpoint_every_phases > 0 &&
        phase % config.checkpoint_every_phases == 0)
      last_checkpoint = save_state("checkpoint_phase" + std::to_string(phase) +
                                   ".mfck");
    if (!options.quiet && phase % 5 == 0) {
      std::cerr << "phase " << phase << " steps " << state.env_steps << "/"
                << config.total_steps;
      for (auto& [ti, a] : accum)
        if (a.episodes > 0)
          std::cerr << "  " << suite.tasks()[static_cast<size_t>(ti)].name
                    << " sf=" << a.solved_sum / a.episodes;
      std::cerr << "\n";
    }
  }

  outcome.env_steps = state.env_steps;
  state.reward_stats = reward_norm.stats();
  outcome.checkpoint_path = save_state("checkpoint_final.mfck");
  return outcome;
}

TrainOutcome finetune(const CheckpointData& base, const std::string& task,
                      TrainerOptions options) {
  check(options.suite != nullptr, "finetune: no task suite");
  options.suite->task_index(task);  // hard error for unknown tasks
  // loss cells come from the fine-tuning preset; run-scale fields
  // (steps, seed, workers, lr override) stay with the caller
  TrainConfig p = TrainConfig::preset(Algo::finetune);
  TrainConfig cfg = options.config;
  cfg.algo = Algo::finetune;
  cfg.initial_std = p.initial_std;  // sigma reset to 1e-3
  cfg.entropy_coef = p.entropy_coef;
  cfg.value_coef = p.value_coef;
  cfg.policy_gradient_coef = p.policy_gradient_coef;
  cfg.imitation_coef = p.imitation_coef;
  cfg.expert_rollout.reset();
  cfg.imitation_loss.reset();
  cfg.reduced_lr.reset();
  cfg.reduced_lr_steps = 0;
  options.config = cfg;
  options.tasks = {task};
  options.resume = &base;
  options.experts = nullptr;
  return train(options);
}

DistillOutcome distill(const CheckpointData& generalist,
                       const std::map<std::string, std::string>& specialists,
                       TrainerOptions options, int compare_episodes) {
  check(options.suite != nullptr, "distill: no task suite");
  const TaskSuite& suite = *options.suite;
  std::vector<std::string> tasks = options.tasks;
  if (tasks.empty())
    for (const auto& t : suite.tasks()) tasks.push_back(t.name);

  DistillOutcome outcome;
  ExpertRegistry registry;  // train() only uses it within the call
  int replaced = 0;
  for (const auto& task : tasks) {
    DistillDecision d;
    d.task = task;
    auto prior = make_analytic_expert(suite, suite.task_index(task));
    EvalOptions eo;
    eo.episodes = compare_episodes;
    eo.seed = options.config.seed ^ 0xd15711ull;
    eo.workers = options.config.workers;
    d.expert_solved =
        evaluate_expert(suite, *prior, task, eo).solved_fraction;
    auto it = specialists.find(task);
    if (it != specialists.end()) {
      auto spec_ckpt = load_checkpoint(it->second);
      d.specialist_solved =
          evaluate_policy(suite, *spec_ckpt.policy, spec_ckpt.obs_stats, task,
                          eo)
              .solved_fraction;
      if (d.specialist_solved >= d.expert_solved) {
        registry.set_checkpoint(task, it->second);
        d.replaced = true;
        replaced += 1;
      }
    }
    if (!d.replaced) registry.set_analytic(task);
    outcome.decisions.push_back(d);
  }
  if (!options.quiet) {
    for (const auto& d : outcome.decisions)
      std::cerr << "distill expert for " << d.task << ": "
                << (d.replaced ? "specialist" : "analytic") << " (expert "
                << d.expert_solved << " vs specialist " << d.specialist_solved
                << ")\n";
    if (replaced == 0)
      std::cerr << "distill: no specialist improved on its expert; "
                   "continuing plain on-policy cloning\n";
  }

  TrainConfig p = TrainConfig::preset(Algo::obc);
  TrainConfig cfg = options.config;
  cfg.algo = Algo::obc;
  cfg.initial_std = p.initial_std;
  cfg.entropy_coef = p.entropy_coef;
  cfg.value_coef = p.value_coef;
  cfg.policy_gradient_coef = p.policy_gradient_coef;
  cfg.imitation_coef = p.imitation_coef;
  cfg.expert_rollout = p.expert_rollout;
  cfg.imitation_loss = p.imitation_loss;
  options.config = cfg;
  options.tasks = tasks;
  options.experts = &registry;
  options.resume = &generalist;
  outcome.train = train(options);
  return outcome;
}

}  // namespace mf
