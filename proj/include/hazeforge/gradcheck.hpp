#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "hazeforge/params.hpp"
#include "hazeforge/rng.hpp"
#include "hazeforge/tensor.hpp"

namespace hazeforge {

// Builds the scalar loss on the given graph from the current parameter
// values. Must be deterministic; it is re-evaluated once per probe.
using ScalarFn = std::function<Tensor(Graph&)>;

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t probes = 0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  double tol = 0.0;
  bool pass = true;
  std::vector<GradCheckEntry> entries;
};

namespace detail {

// Seeded choice of up to `cap` distinct probe indices, ascending.
inline std::vector<std::size_t> probe_indices(std::size_t n, std::size_t cap, uint64_t seed) {
  std::vector<std::size_t> idx;
  if (n <= cap) {
    idx.resize(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
  }
  // Partial Fisher-Yates over an index pool.
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  Rng rng(seed);
  for (std::size_t i = 0; i < cap; ++i) {
    std::size_t j = i + rng.index(n - i);
    std::swap(pool[i], pool[j]);
  }
  idx.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(cap));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace detail

// Relative-error denominator floor. Elements whose gradient magnitude sits
// below it are judged by absolute deviation (|a-n| < tol * floor), because
// the fp64 cancellation noise of a central difference on an O(1) function is
// ~1e-10 regardless of how small the true derivative is.
inline constexpr double kGradCheckScaleFloor = 1e-3;

// Central-difference comparison against caller-provided analytic gradients.
// Parameters are perturbed in place and restored.
// rel = |a-n| / max(|a|, |n|, kGradCheckScaleFloor).
//
// A probe whose error exceeds tol is retried at h/8 and h/64 and scores its
// best attempt: a +-h step that happens to straddle a ReLU/abs kink is an
// artifact of the difference quotient and vanishes once h drops below the
// kink distance, while a genuine gradient defect persists at every step
// size.
inline GradCheckReport grad_check_against(const ScalarFn& f, const std::vector<NamedTensor>& params,
                                          const std::vector<std::vector<double>>& analytic, double h,
                                          double tol, uint64_t probe_seed = 0x9c0ffee5ull,
                                          std::size_t max_probes_per_tensor = 64) {
  if (h <= 0.0) throw PreconditionError("grad_check: h must be > 0");
  GradCheckReport report;
  report.tol = tol;
  auto eval = [&f]() {
    Graph g(false);
    return f(g).value();
  };
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor handle = params[p].tensor;  // shares storage; probes mutate in place
    auto& data = handle.data();
    const auto& grad = analytic[p];
    GradCheckEntry entry;
    entry.name = params[p].name;
    auto idx = detail::probe_indices(data.size(), max_probes_per_tensor, derive_seed(probe_seed, p));
    entry.probes = idx.size();
    for (std::size_t i : idx) {
      const double saved = data[i];
      const double a = grad[i];
      double rel = std::numeric_limits<double>::infinity();
      for (double step : {h, h / 8.0, h / 64.0}) {
        data[i] = saved + step;
        const double fp = eval();
        data[i] = saved - step;
        const double fm = eval();
        data[i] = saved;
        const double numeric = (fp - fm) / (2.0 * step);
        rel = std::min(rel, std::fabs(a - numeric) /
                                std::max({std::fabs(a), std::fabs(numeric), kGradCheckScaleFloor}));
        if (rel < tol) break;
      }
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

// Computes analytic gradients with one backward pass, then compares them
// against central finite differences. Large tensors are subsampled with a
// seeded pick; failures are reported, never thrown.
inline GradCheckReport grad_check(const ScalarFn& f, const std::vector<NamedTensor>& params, double h,
                                  double tol, uint64_t probe_seed = 0x9c0ffee5ull,
                                  std::size_t max_probes_per_tensor = 64) {
  for (const auto& p : params) {
    Tensor handle = p.tensor;
    handle.zero_grad();
  }
  Graph g;
  Tensor loss = f(g);
  g.backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    Tensor handle = p.tensor;
    analytic.push_back(handle.grad());
  }
  return grad_check_against(f, params, analytic, h, tol, probe_seed, max_probes_per_tensor);
}

}  // namespace hazeforge
