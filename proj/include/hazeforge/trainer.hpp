#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "hazeforge/adam.hpp"
#include "hazeforge/dataset.hpp"
#include "hazeforge/ienet.hpp"
#include "hazeforge/ifnet.hpp"
#include "hazeforge/losses.hpp"
#include "hazeforge/metrics.hpp"
#include "hazeforge/threading.hpp"

namespace hazeforge {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 8;
  double lr0 = 1e-3;
  int lr_halve_every = 10;
  AdamConfig adam;
  LossWeights loss;
  uint64_t seed = 0;
};

inline void validate_train_config(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(cfg.lr0 > 0.0)) throw ConfigError("train: lr0 must be > 0");
  if (cfg.lr_halve_every < 1) throw ConfigError("train: lr_halve_every must be >= 1");
}

// lr0 * 0.5^floor(epoch / lr_halve_every)
inline double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw PreconditionError("lr_schedule: epoch must be >= 0");
  return cfg.lr0 * std::pow(0.5, static_cast<double>(epoch / cfg.lr_halve_every));
}

struct StepRow {
  int64_t step = 0;
  double l_m = 0.0, l_p = 0.0, l_s = 0.0, l_c = 0.0, total = 0.0;
};

struct TrainLog {
  std::vector<StepRow> steps;            // batch-mean loss components per step
  std::vector<double> epoch_mean_loss;   // mean total loss per epoch
};

// One TSV line per optimizer step: step, L_m, L_p, L_s, L_c, total.
inline void write_loss_curve(const std::string& path, const TrainLog& log) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "#step\tl_m\tl_p\tl_s\tl_c\ttotal\n";
  char buf[256];
  for (const auto& r : log.steps) {
    std::snprintf(buf, sizeof(buf), "%lld\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\n",
                  static_cast<long long>(r.step), r.l_m, r.l_p, r.l_s, r.l_c, r.total);
    f << buf;
  }
  if (!f) throw IoError("write failed: " + path);
}

namespace detail {

struct SampleResult {
  std::vector<std::vector<double>> grads;
  double l_m = 0, l_p = 0, l_s = 0, l_c = 0, total = 0;
};

// Shared mini-batch loop: seeded per-epoch shuffle, per-sample graphs run in
// parallel on private model clones, gradients reduced as the mean in sample
// order (so results never depend on the worker count), one Adam step per
// batch. The last short batch is kept.
template <typename Model, typename PerSample>
TrainLog train_loop(Model& model, std::size_t num_samples, const TrainConfig& cfg, PerSample per_sample) {
  validate_train_config(cfg);
  if (num_samples == 0) throw ConfigError("train: empty training subset");
  auto master = model.params().tensors();
  AdamState state(master, cfg.adam);
  TrainLog log;
  int64_t step = 0;
  const uint64_t shuffle_base = derive_seed(cfg.seed, 0x5f0ffull);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);
    std::vector<std::size_t> order(num_samples);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(shuffle_base, static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t b0 = 0; b0 < num_samples; b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t bsz = std::min<std::size_t>(cfg.batch_size, num_samples - b0);
      std::vector<SampleResult> results(bsz);
      parallel_for(bsz, [&](std::size_t i) {
        Model local = model.clone();
        Graph g;
        LossBreakdown lb = per_sample(local, order[b0 + i], g);
        g.backward(lb.total);
        SampleResult& r = results[i];
        r.grads.reserve(local.params().size());
        for (const auto& nt : local.params()) r.grads.push_back(nt.tensor.grad());
        r.l_m = lb.l_m;
        r.l_p = lb.l_p;
        r.l_s = lb.l_s;
        r.l_c = lb.l_c;
        r.total = lb.total_value;
      });
      for (const auto& r : results) {
        if (!std::isfinite(r.total)) {
          throw NumericsError("non-finite training loss at step " + std::to_string(step));
        }
      }
      const double inv_b = 1.0 / static_cast<double>(bsz);
      std::vector<std::vector<double>> mean_grads(master.size());
      for (std::size_t p = 0; p < master.size(); ++p) {
        mean_grads[p].assign(master[p].data().size(), 0.0);
        for (std::size_t s = 0; s < bsz; ++s) {
          const auto& gp = results[s].grads[p];
          for (std::size_t k = 0; k < gp.size(); ++k) mean_grads[p][k] += gp[k];
        }
        for (auto& v : mean_grads[p]) v *= inv_b;
      }
      adam_step(master, mean_grads, state, lr);
      StepRow row;
      row.step = step;
      for (const auto& r : results) {
        row.l_m += r.l_m * inv_b;
        row.l_p += r.l_p * inv_b;
        row.l_s += r.l_s * inv_b;
        row.l_c += r.l_c * inv_b;
        row.total += r.total * inv_b;
      }
      log.steps.push_back(row);
      epoch_loss += row.total * static_cast<double>(bsz);
      ++step;
    }
    log.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(num_samples));
  }
  return log;
}

}  // namespace detail

// Stage 1: supervised enhancement training of one branch on its subset.
inline TrainLog train_ienet(IENetModel& model, const std::vector<Sample>& data, const TrainConfig& cfg,
                            const FeatureExtractor& ext) {
  return detail::train_loop(model, data.size(), cfg, [&](IENetModel& local, std::size_t idx, Graph& g) {
    const Sample& s = data[idx];
    IENetOutput out = local.forward(g, s.hazy.to_tensor());
    return total_loss(g, out.enhanced, s.clean.to_tensor(), cfg.loss, ext);
  });
}

// Stage 2: fusion training on frozen branches. Branch outputs are computed
// once without gradients and cached, so the frozen models are never touched
// by the optimizer.
inline TrainLog train_ifnet(IFNetModel& model, const std::vector<IENetModel>& branches,
                            const std::vector<Sample>& data, const TrainConfig& cfg,
                            const FeatureExtractor& ext) {
  if (branches.empty()) throw ConfigError("train_ifnet: need at least one frozen branch");
  if (static_cast<int>(branches.size()) != model.config().n_branches) {
    throw DimensionError("train_ifnet: IFNet expects " + std::to_string(model.config().n_branches) +
                         " branches, got " + std::to_string(branches.size()));
  }
  if (data.empty()) throw ConfigError("train_ifnet: empty training subset");
  std::vector<std::vector<Tensor>> branch_out(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    Graph g(false);
    Tensor in = data[i].hazy.to_tensor();
    branch_out[i].reserve(branches.size());
    for (const auto& b : branches) branch_out[i].push_back(b.forward(g, in).enhanced);
  });
  return detail::train_loop(model, data.size(), cfg, [&](IFNetModel& local, std::size_t idx, Graph& g) {
    Tensor fused = local.forward(g, branch_out[idx]);
    return total_loss(g, fused, data[idx].clean.to_tensor(), cfg.loss, ext);
  });
}

// Single-branch inference with export clamping.
inline Image enhance_image(const IENetModel& model, const Image& hazy) {
  Graph g(false);
  return Image::from_tensor(model.forward(g, hazy.to_tensor()).enhanced);
}

struct DehazeResult {
  Image fused;
  std::vector<Image> branches;
};

// Full pipeline: hazy -> n branch enhancements -> fusion -> clamped images.
// Branch tensors enter the fusion unclamped, exactly as during training.
inline DehazeResult dehaze_pipeline(const std::vector<IENetModel>& branches, const IFNetModel& ifnet,
                                    const Image& hazy) {
  if (static_cast<int>(branches.size()) != ifnet.config().n_branches) {
    throw DimensionError("dehaze: IFNet expects " + std::to_string(ifnet.config().n_branches) +
                         " branch models, got " + std::to_string(branches.size()));
  }
  Graph g(false);
  Tensor in = hazy.to_tensor();
  std::vector<Tensor> outs;
  outs.reserve(branches.size());
  for (const auto& b : branches) outs.push_back(b.forward(g, in).enhanced);
  DehazeResult r;
  r.fused = Image::from_tensor(ifnet.forward(g, outs));
  r.branches.reserve(outs.size());
  for (const auto& t : outs) r.branches.push_back(Image::from_tensor(t));
  return r;
}

// Row i: model i evaluated across bins; entry (i,j) is the mean PSNR of
// model i on the held-out images of bin j.
struct CrossEvalMatrix {
  int n = 0;
  std::vector<double> values;  // row-major
  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * n + j]; }
};

inline CrossEvalMatrix cross_eval(const std::vector<IENetModel>& models,
                                  const std::vector<std::vector<Sample>>& bin_test_sets) {
  const int n = static_cast<int>(models.size());
  if (n == 0) throw ConfigError("cross_eval: no models");
  if (static_cast<int>(bin_test_sets.size()) != n) {
    throw ConfigError("cross_eval: expected test sets for " + std::to_string(n) + " bins, got " +
                      std::to_string(bin_test_sets.size()));
  }
  for (int j = 0; j < n; ++j) {
    if (bin_test_sets[static_cast<std::size_t>(j)].empty()) {
      throw ConfigError("cross_eval: bin " + std::to_string(j + 1) + " has no test samples");
    }
  }
  CrossEvalMatrix m;
  m.n = n;
  m.values.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const auto& set = bin_test_sets[static_cast<std::size_t>(j)];
      std::vector<double> scores(set.size());
      parallel_for(set.size(), [&](std::size_t s) {
        scores[s] = psnr(enhance_image(models[static_cast<std::size_t>(i)], set[s].hazy), set[s].clean);
      });
      double acc = 0.0;
      for (double v : scores) acc += v;
      m.values[static_cast<std::size_t>(i) * n + j] = acc / static_cast<double>(set.size());
    }
  }
  return m;
}

inline void write_cross_eval(const std::string& path, const CrossEvalMatrix& m) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "#mean PSNR of model i (rows) on the test split of bin j (columns)\n";
  char buf[64];
  for (int i = 0; i < m.n; ++i) {
    for (int j = 0; j < m.n; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g%c", m.at(i, j), j + 1 == m.n ? '\n' : '\t');
      f << buf;
    }
  }
  if (!f) throw IoError("write failed: " + path);
}

}  // namespace hazeforge
