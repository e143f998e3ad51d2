#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mf/adam.hpp"
#include "mf/ops.hpp"
#include "mf/rng.hpp"

namespace mf {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  size_t worst_index = 0;
  size_t checked = 0;
  bool passed(double tol) const { return max_rel_error < tol; }
};

// Compares tape gradients against central finite differences. The reference
// side only ever runs the forward pass, so it stays independent of the
// backward rules it is checking.
//
// `fn` must rebuild the computation from scratch on the given tape and
// return a scalar loss. `max_samples` caps how many coordinates per
// parameter are probed (0 = all); coordinates are drawn deterministically
// from `seed`.
//
// The relative error uses max(|analytic|, |numeric|, denominator_floor) as
// denominator: central differences at the default step carry ~1e-9 absolute
// roundoff, so gradients far below the floor are compared on an absolute
// scale instead of drowning in quotient noise.
template <typename T>
GradCheckReport grad_check(
    const std::function<Tensor<T>(Tape<T>&)>& fn, ParamSet<T>& params,
    double step = 1e-5, int max_samples_per_param = 0, uint64_t seed = 0,
    double denominator_floor = 1e-3) {
  GradCheckReport report;

  Tape<T> tape;
  auto loss = fn(tape);
  params.zero_grad();
  tape.backward(loss);
  std::vector<std::vector<T>> analytic;
  for (auto& p : params.params) {
    p.raw()->ensure_grad();
    analytic.push_back(p.grad());
  }

  Rng rng(seed ^ 0x9d2c5680u);
  for (size_t pi = 0; pi < params.params.size(); ++pi) {
    auto& p = params.params[pi];
    size_t n = p.numel();
    std::vector<size_t> coords;
    if (max_samples_per_param <= 0 ||
        static_cast<size_t>(max_samples_per_param) >= n) {
      coords.resize(n);
      for (size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      for (int s = 0; s < max_samples_per_param; ++s)
        coords.push_back(static_cast<size_t>(rng.uniform_int(static_cast<int>(n))));
    }
    for (size_t i : coords) {
      T saved = p.value()[i];
      p.value()[i] = saved + static_cast<T>(step);
      Tape<T> t_plus;
      t_plus.set_grad_enabled(false);
      double f_plus = static_cast<double>(fn(t_plus).scalar());
      p.value()[i] = saved - static_cast<T>(step);
      Tape<T> t_minus;
      t_minus.set_grad_enabled(false);
      double f_minus = static_cast<double>(fn(t_minus).scalar());
      p.value()[i] = saved;

      double numeric = (f_plus - f_minus) / (2.0 * step);
      double exact = static_cast<double>(analytic[pi][i]);
      double denom =
          std::max({std::abs(numeric), std::abs(exact), denominator_floor});
      double rel = std::abs(numeric - exact) / denom;
      report.checked += 1;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = p.name();
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace mf
