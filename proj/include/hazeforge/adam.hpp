#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hazeforge/tensor.hpp"

namespace hazeforge {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second-moment state for one fixed list of parameters.
class AdamState {
 public:
  AdamState(const std::vector<Tensor>& params, AdamConfig cfg = {}) : cfg_(cfg) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Tensor& p : params) {
      m_.emplace_back(p.data().size(), 0.0);
      v_.emplace_back(p.data().size(), 0.0);
    }
  }

  int64_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<double>& m(std::size_t i) const { return m_[i]; }
  const std::vector<double>& v(std::size_t i) const { return v_[i]; }

 private:
  friend void adam_step(std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads,
                        AdamState& state, double lr);
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// One bias-corrected Adam update, in place.
inline void adam_step(std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads,
                      AdamState& state, double lr) {
  if (lr <= 0.0) throw PreconditionError("adam_step: lr must be > 0");
  if (params.size() != grads.size() || params.size() != state.m_.size()) {
    throw DimensionError("adam_step: params/grads/state count mismatch");
  }
  state.t_ += 1;
  const double b1 = state.cfg_.beta1;
  const double b2 = state.cfg_.beta2;
  const double eps = state.cfg_.eps;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& w = params[p].data();
    const auto& g = grads[p];
    auto& m = state.m_[p];
    auto& v = state.v_[p];
    if (g.size() != w.size() || m.size() != w.size()) {
      throw DimensionError("adam_step: gradient shape mismatch for parameter " + std::to_string(p));
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace hazeforge
