#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mf/tensor.hpp"

namespace mf {

// Named set of trainable leaves. Gradients live on the leaf nodes.
template <typename T>
struct ParamSet {
  std::vector<Tensor<T>> params;

  void add(const Tensor<T>& p) { params.push_back(p); }
  void append(const ParamSet<T>& other) {
    for (const auto& p : other.params) params.push_back(p);
  }
  size_t count() const {
    size_t n = 0;
    for (const auto& p : params) n += p.numel();
    return n;
  }
  void zero_grad() {
    for (auto& p : params) {
      auto& g = p.raw()->grad;
      g.assign(p.numel(), T(0));
    }
  }
};

template <typename T>
struct AdamState {
  T lr = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T epsilon = T(1e-8);
  int64_t step_count = 0;
  std::vector<std::vector<T>> m;  // first moments, one per parameter
  std::vector<std::vector<T>> v;  // second moments

  void init(const ParamSet<T>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params.params) {
      m.emplace_back(p.numel(), T(0));
      v.emplace_back(p.numel(), T(0));
    }
    step_count = 0;
  }
};

// Global-norm gradient clipping followed by one Adam update.
// Returns the pre-clip global gradient norm.
template <typename T>
double adam_step(AdamState<T>& state, ParamSet<T>& params, T max_grad_norm) {
  check(state.m.size() == params.params.size(),
        "adam_step: state not initialized for this parameter set");
  double sq_sum = 0.0;
  for (size_t pi = 0; pi < params.params.size(); ++pi) {
    auto& p = params.params[pi];
    p.raw()->ensure_grad();
    check(state.m[pi].size() == p.numel(), "adam_step: moment shape mismatch on ",
          p.name());
    for (T g : p.grad()) {
      check(!std::isnan(static_cast<double>(g)), "adam_step: NaN gradient in ",
            p.name());
      sq_sum += static_cast<double>(g) * static_cast<double>(g);
    }
  }
  double norm = std::sqrt(sq_sum);
  double clip = 1.0;
  if (max_grad_norm > T(0) && norm > static_cast<double>(max_grad_norm))
    clip = static_cast<double>(max_grad_norm) / norm;

  state.step_count += 1;
  double b1 = static_cast<double>(state.beta1);
  double b2 = static_cast<double>(state.beta2);
  double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  for (size_t pi = 0; pi < params.params.size(); ++pi) {
    auto& p = params.params[pi];
    auto& val = p.value();
    const auto& grad = p.grad();
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    for (size_t i = 0; i < val.size(); ++i) {
      double g = static_cast<double>(grad[i]) * clip;
      double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * g;
      double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      double update = (mi / bc1) /
                      (std::sqrt(vi / bc2) + static_cast<double>(state.epsilon));
      val[i] -= static_cast<T>(static_cast<double>(state.lr) * update);
    }
  }
  return norm;
}

}  // namespace mf
