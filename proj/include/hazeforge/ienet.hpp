#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hazeforge/nn_init.hpp"
#include "hazeforge/ops.hpp"
#include "hazeforge/params.hpp"

namespace hazeforge {

// Enhancement-network variants: the residual design plus fixed-kernel
// ablation stacks depth-matched to it.
enum class IENetVariant { kRes, kK3, kK5, kK7, kK9 };

inline const char* to_string(IENetVariant v) {
  switch (v) {
    case IENetVariant::kRes: return "res";
    case IENetVariant::kK3: return "k3";
    case IENetVariant::kK5: return "k5";
    case IENetVariant::kK7: return "k7";
    case IENetVariant::kK9: return "k9";
  }
  return "?";
}

inline IENetVariant parse_ienet_variant(const std::string& s) {
  if (s == "res") return IENetVariant::kRes;
  if (s == "k3") return IENetVariant::kK3;
  if (s == "k5") return IENetVariant::kK5;
  if (s == "k7") return IENetVariant::kK7;
  if (s == "k9") return IENetVariant::kK9;
  throw ConfigError("unknown IENet variant: " + s + " (expected res|k3|k5|k7|k9)");
}

struct IENetConfig {
  IENetVariant variant = IENetVariant::kRes;
  int num_residual_modules = 4;
  int base_channels = 16;
  uint64_t seed = 0;
};

struct IENetOutput {
  Tensor coeff;     // stretching coefficient R, >= 0
  Tensor enhanced;  // J_E = R * I, unclamped
};

// Predicts a per-pixel stretching coefficient R from a hazy image and
// returns J_E = R * I.
//
// res variant: 5x5 conv_in (3->C) + ReLU; N residual modules, each three
// [3x3 conv C->C + ReLU] groups plus a fourth 3x3 conv added to the module
// input; conv_in and final module outputs concatenated to 2C channels; 5x5
// conv_out (2C->3) + ReLU.
//
// kX variants: X*X conv_in (3->C) + ReLU, 4N plain [X*X conv C->C + ReLU]
// layers, X*X conv_out (C->3) + ReLU -- the same total conv count as res.
class IENetModel {
 public:
  explicit IENetModel(const IENetConfig& cfg) : cfg_(cfg) {
    if (cfg.base_channels < 1) throw ConfigError("IENet: base_channels must be >= 1");
    if (cfg.num_residual_modules < 1) throw ConfigError("IENet: num_residual_modules must be >= 1");
    Rng rng(derive_seed(cfg.seed, 0x1e9e7));
    const int c = cfg.base_channels;
    const int k_io = io_kernel();
    params_.add("conv_in.w", init_conv_kernel(rng, c, 3, k_io));
    params_.add("conv_in.b", init_conv_bias(rng, c, 3, k_io));
    if (cfg.variant == IENetVariant::kRes) {
      for (int m = 1; m <= cfg.num_residual_modules; ++m) {
        for (int j = 1; j <= 4; ++j) {
          const std::string stem = "res" + std::to_string(m) + ".g" + std::to_string(j);
          params_.add(stem + ".w", init_conv_kernel(rng, c, c, 3));
          params_.add(stem + ".b", init_conv_bias(rng, c, c, 3));
        }
      }
      params_.add("conv_out.w", init_conv_kernel(rng, 3, 2 * c, k_io));
      params_.add("conv_out.b", init_conv_bias(rng, 3, 2 * c, k_io));
    } else {
      const int k = inner_kernel();
      for (int i = 1; i <= 4 * cfg.num_residual_modules; ++i) {
        const std::string stem = "plain" + std::to_string(i);
        params_.add(stem + ".w", init_conv_kernel(rng, c, c, k));
        params_.add(stem + ".b", init_conv_bias(rng, c, c, k));
      }
      params_.add("conv_out.w", init_conv_kernel(rng, 3, c, k_io));
      params_.add("conv_out.b", init_conv_bias(rng, 3, c, k_io));
    }
  }

  static IENetModel from_params(ParamSet params) { return IENetModel(std::move(params)); }

  const IENetConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  IENetModel clone() const {
    IENetModel out(*this);
    out.params_ = params_.clone();
    return out;
  }

  // Number of convolution kernels (2 + 4 * num_residual_modules, all variants).
  int num_conv_layers() const { return 2 + 4 * cfg_.num_residual_modules; }

  IENetOutput forward(Graph& g, const Tensor& image) const {
    if (image.rank() != 3 || image.dim(0) != 3) {
      throw DimensionError("IENet: input must be [3,H,W], got " + shape_str(image.shape()));
    }
    const int k_io = io_kernel();
    if (image.dim(1) < k_io || image.dim(2) < k_io) {
      throw DimensionError("IENet: input " + shape_str(image.shape()) + " smaller than kernel " +
                           std::to_string(k_io));
    }
    const int pad_io = k_io / 2;
    Tensor f0 = relu(g, conv2d(g, image, params_.at("conv_in.w"), params_.at("conv_in.b"), 1, pad_io));
    Tensor feat = f0;
    Tensor r;
    if (cfg_.variant == IENetVariant::kRes) {
      for (int m = 1; m <= cfg_.num_residual_modules; ++m) {
        const std::string stem = "res" + std::to_string(m);
        Tensor y = feat;
        for (int j = 1; j <= 3; ++j) {
          const std::string gname = stem + ".g" + std::to_string(j);
          y = relu(g, conv2d(g, y, params_.at(gname + ".w"), params_.at(gname + ".b"), 1, 1));
        }
        y = conv2d(g, y, params_.at(stem + ".g4.w"), params_.at(stem + ".g4.b"), 1, 1);
        feat = add(g, y, feat);  // skip connection
      }
      Tensor cat = concat_channels(g, {f0, feat});
      r = relu(g, conv2d(g, cat, params_.at("conv_out.w"), params_.at("conv_out.b"), 1, pad_io));
    } else {
      const int k = inner_kernel();
      for (int i = 1; i <= 4 * cfg_.num_residual_modules; ++i) {
        const std::string stem = "plain" + std::to_string(i);
        feat = relu(g, conv2d(g, feat, params_.at(stem + ".w"), params_.at(stem + ".b"), 1, k / 2));
      }
      r = relu(g, conv2d(g, feat, params_.at("conv_out.w"), params_.at("conv_out.b"), 1, pad_io));
    }
    return {r, mul(g, r, image)};
  }

 private:
  int io_kernel() const {
    switch (cfg_.variant) {
      case IENetVariant::kRes: return 5;
      case IENetVariant::kK3: return 3;
      case IENetVariant::kK5: return 5;
      case IENetVariant::kK7: return 7;
      case IENetVariant::kK9: return 9;
    }
    return 5;
  }

  int inner_kernel() const { return cfg_.variant == IENetVariant::kRes ? 3 : io_kernel(); }

  // Reconstructs the configuration from canonical parameter names/shapes.
  explicit IENetModel(ParamSet params) : params_(std::move(params)) {
    const Tensor& cin_w = params_.at("conv_in.w");
    if (cin_w.rank() != 4 || cin_w.dim(1) != 3) throw ConfigError("IENet weights: bad conv_in.w shape");
    cfg_.base_channels = cin_w.dim(0);
    const int k_io = cin_w.dim(2);
    if (params_.contains("res1.g1.w")) {
      cfg_.variant = IENetVariant::kRes;
      if (k_io != 5) throw ConfigError("IENet weights: res variant requires 5x5 conv_in");
      int m = 0;
      while (params_.contains("res" + std::to_string(m + 1) + ".g1.w")) ++m;
      cfg_.num_residual_modules = m;
    } else if (params_.contains("plain1.w")) {
      switch (k_io) {
        case 3: cfg_.variant = IENetVariant::kK3; break;
        case 5: cfg_.variant = IENetVariant::kK5; break;
        case 7: cfg_.variant = IENetVariant::kK7; break;
        case 9: cfg_.variant = IENetVariant::kK9; break;
        default: throw ConfigError("IENet weights: unsupported kernel size " + std::to_string(k_io));
      }
      int p = 0;
      while (params_.contains("plain" + std::to_string(p + 1) + ".w")) ++p;
      if (p == 0 || p % 4 != 0) throw ConfigError("IENet weights: plain layer count must be a multiple of 4");
      cfg_.num_residual_modules = p / 4;
    } else {
      throw ConfigError("IENet weights: neither res nor plain layers found");
    }
    validate();
  }

  void validate() const {
    const int c = cfg_.base_channels;
    const int k_io = io_kernel();
    auto expect = [&](const std::string& name, const Shape& shape) {
      const Tensor& t = params_.at(name);
      if (t.shape() != shape) {
        throw ConfigError("IENet weights: " + name + " has shape " + shape_str(t.shape()) + ", expected " +
                          shape_str(shape));
      }
    };
    std::size_t expected = 4;
    expect("conv_in.w", {c, 3, k_io, k_io});
    expect("conv_in.b", {c});
    if (cfg_.variant == IENetVariant::kRes) {
      for (int m = 1; m <= cfg_.num_residual_modules; ++m) {
        for (int j = 1; j <= 4; ++j) {
          const std::string stem = "res" + std::to_string(m) + ".g" + std::to_string(j);
          expect(stem + ".w", {c, c, 3, 3});
          expect(stem + ".b", {c});
          expected += 2;
        }
      }
      expect("conv_out.w", {3, 2 * c, k_io, k_io});
    } else {
      const int k = inner_kernel();
      for (int i = 1; i <= 4 * cfg_.num_residual_modules; ++i) {
        const std::string stem = "plain" + std::to_string(i);
        expect(stem + ".w", {c, c, k, k});
        expect(stem + ".b", {c});
        expected += 2;
      }
      expect("conv_out.w", {3, c, k_io, k_io});
    }
    expect("conv_out.b", {3});
    if (params_.size() != expected) {
      throw ConfigError("IENet weights: unexpected parameter count " + std::to_string(params_.size()));
    }
  }

  IENetConfig cfg_;
  ParamSet params_;
};

}  // namespace hazeforge
