#pragma once

#include <vector>

#include "mf/util.hpp"

namespace mf {

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;  // advantages + values
};

// Generalized advantage estimation over one environment's transition
// sequence. `dones[t]` marks episode boundaries. For non-terminal truncation
// the caller supplies the value of the observation after the boundary in
// `bootstrap_values[t]` (zero for true terminations); `final_bootstrap` is
// the value after the last transition when the sequence ends mid-episode.
GaeResult gae(const std::vector<double>& rewards,
              const std::vector<double>& values,
              const std::vector<uint8_t>& dones,
              const std::vector<double>& bootstrap_values,
              double final_bootstrap, double gamma, double lambda);

}  // namespace mf
