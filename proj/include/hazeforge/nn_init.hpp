#pragma once

#include <cmath>

#include "hazeforge/rng.hpp"
#include "hazeforge/tensor.hpp"

namespace hazeforge {

// Fan-in-scaled uniform initialization, bounds +-sqrt(1/(C_in*k*k)).
// Kernels and biases draw from the same stream in canonical parameter
// order, so a model's weights are a pure function of its seed.
inline Tensor init_conv_kernel(Rng& rng, int cout, int cin, int k) {
  const double bound = std::sqrt(1.0 / (static_cast<double>(cin) * k * k));
  Tensor t = Tensor::zeros({cout, cin, k, k}, true);
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

inline Tensor init_conv_bias(Rng& rng, int cout, int cin, int k) {
  const double bound = std::sqrt(1.0 / (static_cast<double>(cin) * k * k));
  Tensor t = Tensor::zeros({cout}, true);
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace hazeforge
