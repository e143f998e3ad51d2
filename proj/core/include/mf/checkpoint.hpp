#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mf/mlp_policy.hpp"
#include "mf/policy.hpp"
#include "mf/standardizer.hpp"

namespace mf {

// Versioned container: vocabulary, architecture spec, parameter arrays
// (little-endian float32 with shape headers), standardizer states and run
// metadata. See docs/checkpoint_format.md.
struct CheckpointData {
  static constexpr uint32_t kFormatVersion = 1;

  std::string algo = "none";
  uint64_t seed = 0;
  long long env_steps = 0;
  std::vector<std::string> tasks;
  bool disjoint_vocabulary = false;
  std::string policy_kind = "transformer";  // or "mlp"

  PolicySpec spec;
  std::vector<std::string> vocab_words;
  std::shared_ptr<TransformerPolicy<float>> policy;

  MlpSpec mlp_spec;
  std::shared_ptr<MlpPolicy<float>> mlp;

  RunningStandardizer obs_stats;
  double reward_gamma = 0.99;
  bool reward_per_task = true;
  std::map<int, Welford> reward_stats;

  double sigma_tilde() const {
    return policy ? policy->sigma_tilde() : 1.0;
  }
};

void save_checkpoint(const std::string& path, const CheckpointData& data);
// Rejects unknown format versions and corrupt containers with a hard error.
CheckpointData load_checkpoint(const std::string& path);

}  // namespace mf
