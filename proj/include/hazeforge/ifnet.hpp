#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hazeforge/nn_init.hpp"
#include "hazeforge/ops.hpp"
#include "hazeforge/params.hpp"

namespace hazeforge {

enum class FusionMode { kStacking, kWeighted };

inline const char* to_string(FusionMode m) {
  return m == FusionMode::kStacking ? "stacking" : "weighted";
}

inline FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "stacking") return FusionMode::kStacking;
  if (s == "weighted") return FusionMode::kWeighted;
  throw ConfigError("unknown fusion mode: " + s + " (expected stacking|weighted)");
}

struct IFNetConfig {
  int n_branches = 2;
  FusionMode fusion_mode = FusionMode::kStacking;
  int base_channels = 16;
  uint64_t seed = 0;
};

// Fuses n branch outputs through four levels of per-branch features that are
// stacked across branches, reduced at the deepest level and merged back
// coarse-to-fine. All convs are 3x3, stride 1, pad 1, ReLU.
//
// stacking: the head emits the fused 3-channel image directly (ReLU).
// weighted: the head emits n sigmoid weight maps; the output is the
// weight-map sum of the branch inputs, weights broadcast over RGB.
class IFNetModel {
 public:
  explicit IFNetModel(const IFNetConfig& cfg) : cfg_(cfg) {
    if (cfg.n_branches < 1) throw ConfigError("IFNet: n_branches must be >= 1");
    if (cfg.base_channels < 1) throw ConfigError("IFNet: base_channels must be >= 1");
    Rng rng(derive_seed(cfg.seed, 0x1f9e7));
    const int c = cfg.base_channels;
    const int n = cfg.n_branches;
    for (int i = 1; i <= n; ++i) {
      const std::string stem = "entry" + std::to_string(i);
      params_.add(stem + ".w", init_conv_kernel(rng, c, 3, 3));
      params_.add(stem + ".b", init_conv_bias(rng, c, 3, 3));
    }
    for (int i = 1; i <= n; ++i) {
      for (int l = 2; l <= 4; ++l) {
        const std::string stem = "level" + std::to_string(i) + "." + std::to_string(l);
        params_.add(stem + ".w", init_conv_kernel(rng, c, c, 3));
        params_.add(stem + ".b", init_conv_bias(rng, c, c, 3));
      }
    }
    params_.add("reduce.w", init_conv_kernel(rng, c, n * c, 3));
    params_.add("reduce.b", init_conv_bias(rng, c, n * c, 3));
    for (int l = 3; l >= 1; --l) {
      const std::string stem = "merge" + std::to_string(l);
      params_.add(stem + ".w", init_conv_kernel(rng, c, c + n * c, 3));
      params_.add(stem + ".b", init_conv_bias(rng, c, c + n * c, 3));
    }
    const int head_out = cfg.fusion_mode == FusionMode::kStacking ? 3 : n;
    params_.add("head.w", init_conv_kernel(rng, head_out, c, 3));
    params_.add("head.b", init_conv_bias(rng, head_out, c, 3));
  }

  // mode_hint resolves the head ambiguity when n_branches == 3 (a 3-channel
  // head is valid for both fusion modes).
  static IFNetModel from_params(ParamSet params, std::optional<FusionMode> mode_hint = std::nullopt) {
    return IFNetModel(std::move(params), mode_hint);
  }

  const IFNetConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  IFNetModel clone() const {
    IFNetModel out(*this);
    out.params_ = params_.clone();
    return out;
  }

  Tensor forward(Graph& g, const std::vector<Tensor>& branches) const {
    const int n = cfg_.n_branches;
    if (static_cast<int>(branches.size()) != n) {
      throw DimensionError("IFNet: expected " + std::to_string(n) + " branch inputs, got " +
                           std::to_string(branches.size()));
    }
    for (const Tensor& b : branches) {
      if (b.rank() != 3 || b.dim(0) != 3) {
        throw DimensionError("IFNet: branch inputs must be [3,H,W], got " + shape_str(b.shape()));
      }
      if (b.shape() != branches[0].shape()) {
        throw DimensionError("IFNet: branch shapes differ, " + shape_str(b.shape()) + " vs " +
                             shape_str(branches[0].shape()));
      }
    }
    if (branches[0].dim(1) < 3 || branches[0].dim(2) < 3) {
      throw DimensionError("IFNet: input " + shape_str(branches[0].shape()) + " smaller than 3x3 kernel");
    }

    // Per-branch feature pyramids (same resolution at every level).
    std::vector<std::vector<Tensor>> feats(4);
    for (int i = 1; i <= n; ++i) {
      const std::string entry = "entry" + std::to_string(i);
      Tensor f = relu(g, conv2d(g, branches[static_cast<std::size_t>(i - 1)], params_.at(entry + ".w"),
                                params_.at(entry + ".b"), 1, 1));
      feats[0].push_back(f);
      for (int l = 2; l <= 4; ++l) {
        const std::string stem = "level" + std::to_string(i) + "." + std::to_string(l);
        f = relu(g, conv2d(g, f, params_.at(stem + ".w"), params_.at(stem + ".b"), 1, 1));
        feats[static_cast<std::size_t>(l - 1)].push_back(f);
      }
    }
    std::vector<Tensor> stacks(4);
    for (int l = 0; l < 4; ++l) stacks[static_cast<std::size_t>(l)] = concat_channels(g, feats[static_cast<std::size_t>(l)]);

    // Deepest-to-shallowest merge.
    Tensor fused = relu(g, conv2d(g, stacks[3], params_.at("reduce.w"), params_.at("reduce.b"), 1, 1));
    for (int l = 3; l >= 1; --l) {
      const std::string stem = "merge" + std::to_string(l);
      Tensor cat = concat_channels(g, {fused, stacks[static_cast<std::size_t>(l - 1)]});
      fused = relu(g, conv2d(g, cat, params_.at(stem + ".w"), params_.at(stem + ".b"), 1, 1));
    }

    if (cfg_.fusion_mode == FusionMode::kStacking) {
      return relu(g, conv2d(g, fused, params_.at("head.w"), params_.at("head.b"), 1, 1));
    }
    Tensor weights = sigmoid(g, conv2d(g, fused, params_.at("head.w"), params_.at("head.b"), 1, 1));
    Tensor out;
    for (int i = 0; i < n; ++i) {
      Tensor wi = slice_channels(g, weights, i, 1);
      Tensor rep = concat_channels(g, {wi, wi, wi});
      Tensor term = mul(g, rep, branches[static_cast<std::size_t>(i)]);
      out = i == 0 ? term : add(g, out, term);
    }
    return out;
  }

 private:
  IFNetModel(ParamSet params, std::optional<FusionMode> mode_hint) : params_(std::move(params)) {
    int n = 0;
    while (params_.contains("entry" + std::to_string(n + 1) + ".w")) ++n;
    if (n == 0) throw ConfigError("IFNet weights: no entry convolutions found");
    cfg_.n_branches = n;
    const Tensor& e1 = params_.at("entry1.w");
    if (e1.rank() != 4) throw ConfigError("IFNet weights: bad entry1.w shape");
    cfg_.base_channels = e1.dim(0);
    const Tensor& head = params_.at("head.w");
    const int head_out = head.dim(0);
    if (mode_hint) {
      cfg_.fusion_mode = *mode_hint;
      const int want = cfg_.fusion_mode == FusionMode::kStacking ? 3 : n;
      if (head_out != want) {
        throw ConfigError("IFNet weights: head emits " + std::to_string(head_out) + " channels but " +
                          std::string(to_string(cfg_.fusion_mode)) + " fusion with n=" + std::to_string(n) +
                          " requires " + std::to_string(want));
      }
    } else if (head_out == 3 && n != 3) {
      cfg_.fusion_mode = FusionMode::kStacking;
    } else if (head_out == n && n != 3) {
      cfg_.fusion_mode = FusionMode::kWeighted;
    } else if (head_out == 3 && n == 3) {
      throw ConfigError("IFNet weights: fusion mode is ambiguous for n=3; pass the mode explicitly");
    } else {
      throw ConfigError("IFNet weights: head channel count " + std::to_string(head_out) +
                        " matches neither fusion mode for n=" + std::to_string(n));
    }
    validate();
  }

  void validate() const {
    const int c = cfg_.base_channels;
    const int n = cfg_.n_branches;
    auto expect = [&](const std::string& name, const Shape& shape) {
      const Tensor& t = params_.at(name);
      if (t.shape() != shape) {
        throw ConfigError("IFNet weights: " + name + " has shape " + shape_str(t.shape()) + ", expected " +
                          shape_str(shape));
      }
    };
    for (int i = 1; i <= n; ++i) {
      expect("entry" + std::to_string(i) + ".w", {c, 3, 3, 3});
      expect("entry" + std::to_string(i) + ".b", {c});
      for (int l = 2; l <= 4; ++l) {
        const std::string stem = "level" + std::to_string(i) + "." + std::to_string(l);
        expect(stem + ".w", {c, c, 3, 3});
        expect(stem + ".b", {c});
      }
    }
    expect("reduce.w", {c, n * c, 3, 3});
    expect("reduce.b", {c});
    for (int l = 1; l <= 3; ++l) {
      expect("merge" + std::to_string(l) + ".w", {c, c + n * c, 3, 3});
      expect("merge" + std::to_string(l) + ".b", {c});
    }
    const int head_out = cfg_.fusion_mode == FusionMode::kStacking ? 3 : n;
    expect("head.w", {head_out, c, 3, 3});
    expect("head.b", {head_out});
    const std::size_t expected = static_cast<std::size_t>(2) * (n + 3 * n + 1 + 3 + 1);
    if (params_.size() != expected) {
      throw ConfigError("IFNet weights: unexpected parameter count " + std::to_string(params_.size()));
    }
  }

  IFNetConfig cfg_;
  ParamSet params_;
};

}  // namespace hazeforge
