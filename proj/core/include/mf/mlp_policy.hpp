#pragma once

#include <vector>

#include "mf/policy.hpp"

namespace mf {

// Flat baseline: zero-padded flattened observation plus a learned task
// embedding through a 2-hidden-layer MLP. Exploration uses one learnable
// log-std per (padded) action component.
struct MlpSpec {
  int max_flat_dim = 0;   // padded flattened observation size across tasks
  int max_actions = 0;    // padded action size across tasks
  int num_tasks = 0;
  int task_embedding_dim = 16;
  int hidden1 = 256;
  int hidden2 = 256;
  double initial_std = 1.0;
};

template <typename T>
struct MlpForward {
  Tensor<T> pre_squash_mean;  // [B, max_actions]
  Tensor<T> squashed_mean;    // [B, max_actions]
  Tensor<T> log_sigma;        // [B, max_actions]
  Tensor<T> value;            // [B]
};

template <typename T>
class MlpPolicy {
 public:
  MlpPolicy(const MlpSpec& spec, uint64_t seed) : spec_(spec) {
    check(spec.max_flat_dim > 0 && spec.max_actions > 0 && spec.num_tasks > 0,
          "mlp policy: invalid spec");
    Rng rng = Rng::derive(seed, "mlp-init");
    task_table_ = make_leaf<T>({spec.num_tasks, spec.task_embedding_dim}, true,
                               "mlp.task_table");
    for (auto& v : task_table_.value())
      v = static_cast<T>(rng.normal(0.0, 0.02));
    int in = spec.max_flat_dim + spec.task_embedding_dim;
    fc1_.init(in, spec.hidden1, rng, "mlp.fc1");
    fc2_.init(spec.hidden1, spec.hidden2, rng, "mlp.fc2");
    action_head_.init(spec.hidden2, spec.max_actions, rng, "mlp.action_head");
    value_head_.init(spec.hidden2, 1, rng, "mlp.value_head");
    log_std_ = make_leaf<T>({spec.max_actions}, true, "mlp.log_std");
    for (auto& v : log_std_.value())
      v = static_cast<T>(std::log(spec.initial_std));
  }

  const MlpSpec& spec() const { return spec_; }

  ParamSet<T> parameters() const {
    ParamSet<T> ps;
    ps.add(task_table_);
    fc1_.collect(ps);
    fc2_.collect(ps);
    action_head_.collect(ps);
    value_head_.collect(ps);
    ps.add(log_std_);
    return ps;
  }
  size_t parameter_count() const { return parameters().count(); }

  // obs: B x max_flat_dim, already padded with zeros past each task's
  // true dimension.
  MlpForward<T> forward(Tape<T>& t, const std::vector<T>& obs,
                        const std::vector<int>& task_ids, int batch) const {
    check(obs.size() ==
              static_cast<size_t>(batch) * spec_.max_flat_dim,
          "mlp forward: obs size mismatch");
    auto x = t.constant({batch, spec_.max_flat_dim}, std::vector<T>(obs));
    std::vector<std::vector<int>> groups(static_cast<size_t>(batch));
    for (int b = 0; b < batch; ++b) {
      check(task_ids[b] >= 0 && task_ids[b] < spec_.num_tasks,
            "mlp forward: bad task id ", task_ids[b]);
      groups[b] = {task_ids[b]};
    }
    auto emb = t.gather_sum_rows(task_table_, groups);  // [B, E]
    auto h = t.concat_last({x, emb});
    h = t.relu(fc1_(t, h));
    h = t.relu(fc2_(t, h));
    MlpForward<T> out;
    out.pre_squash_mean = action_head_(t, h);
    out.squashed_mean = t.sigmoid(out.pre_squash_mean);
    auto zeros = t.constant({batch, spec_.max_actions},
                            std::vector<T>(static_cast<size_t>(batch) *
                                               spec_.max_actions,
                                           T(0)));
    out.log_sigma = t.add(zeros, log_std_);  // broadcast over rows
    out.value = t.reshape(value_head_(t, h), {batch});
    return out;
  }

 private:
  MlpSpec spec_;
  Tensor<T> task_table_;
  nn::Linear<T> fc1_, fc2_;
  nn::Linear<T> action_head_, value_head_;
  Tensor<T> log_std_;
};

}  // namespace mf
