#include "mf/gae.hpp"

namespace mf {

GaeResult gae(const std::vector<double>& rewards,
              const std::vector<double>& values,
              const std::vector<uint8_t>& dones,
              const std::vector<double>& bootstrap_values,
              double final_bootstrap, double gamma, double lambda) {
  size_t n = rewards.size();
  check(values.size() == n && dones.size() == n && bootstrap_values.size() == n,
        "gae: sequence lengths differ");
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double running = 0.0;
  for (size_t i = n; i-- > 0;) {
    double next_value;
    if (dones[i]) {
      next_value = bootstrap_values[i];  // 0 for terminal, V(s_T) if truncated
      running = 0.0;                     // advantage chain resets at boundary
    } else if (i + 1 == n) {
      next_value = final_bootstrap;
    } else {
      next_value = values[i + 1];
    }
    double delta = rewards[i] + gamma * next_value - values[i];
    running = delta + gamma * lambda * (dones[i] ? 0.0 : running);
    out.advantages[i] = running;
    out.returns[i] = running + values[i];
  }
  return out;
}

}  // namespace mf
