#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hazeforge/nn_init.hpp"
#include "hazeforge/ops.hpp"

namespace hazeforge {

struct LossWeights {
  double lambda_m = 1.0;  // reconstruction
  double lambda_p = 1.0;  // perceptual
  double lambda_s = 1.0;  // structural
  double lambda_c = 1.0;  // color
};

// Mean absolute difference over all elements.
inline Tensor l1_loss(Graph& g, const Tensor& out, const Tensor& ref) {
  detail::check_same_shape(out, ref, "l1_loss");
  return mean(g, abs(g, sub(g, out, ref)));
}

// The published seed of the perceptual feature extractor. The extractor is a
// fixed random convolutional pyramid standing in for a pretrained backbone,
// so its loss values are self-consistent but not comparable across seeds.
inline constexpr uint64_t kFeatureExtractorSeed = 0xfea7c0de5eedull;

// Four frozen stages of [3x3 conv + ReLU + 2x2 mean pool] with widths
// 16, 32, 64, 64. Weights are drawn once from the seed and never trained;
// gradients flow through the stages to the images being compared.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(uint64_t seed = kFeatureExtractorSeed) {
    Rng rng(seed);
    const int widths[4] = {16, 32, 64, 64};
    int cin = 3;
    for (int s = 0; s < 4; ++s) {
      kernels_[s] = init_conv_kernel(rng, widths[s], cin, 3);
      biases_[s] = init_conv_bias(rng, widths[s], cin, 3);
      kernels_[s].set_requires_grad(false);
      biases_[s].set_requires_grad(false);
      cin = widths[s];
    }
  }

  // Requires H and W divisible by 16 (four pooling halvings).
  std::array<Tensor, 4> stages(Graph& g, const Tensor& image) const {
    detail::check_chw(image, "FeatureExtractor");
    if (image.dim(1) % 16 != 0 || image.dim(2) % 16 != 0) {
      throw DimensionError("FeatureExtractor: spatial dims must be divisible by 16, got " +
                           shape_str(image.shape()));
    }
    std::array<Tensor, 4> out;
    Tensor x = image;
    for (int s = 0; s < 4; ++s) {
      x = avg_pool2(g, relu(g, conv2d(g, x, kernels_[s], biases_[s], 1, 1)));
      out[static_cast<std::size_t>(s)] = x;
    }
    return out;
  }

 private:
  std::array<Tensor, 4> kernels_;
  std::array<Tensor, 4> biases_;
};

// Sum over stages of ||phi_l(out) - phi_l(ref)||_2 / S_l, where S_l is the
// stage's spatial size H_l * W_l and the norm runs over all stage elements.
inline Tensor perceptual_loss(Graph& g, const Tensor& out, const Tensor& ref, const FeatureExtractor& ext) {
  detail::check_same_shape(out, ref, "perceptual_loss");
  auto fo = ext.stages(g, out);
  auto fr = ext.stages(g, ref);
  Tensor total;
  for (int s = 0; s < 4; ++s) {
    Tensor d = sub(g, fo[static_cast<std::size_t>(s)], fr[static_cast<std::size_t>(s)]);
    Tensor norm = sqrt(g, sum(g, square(g, d)));
    const double spatial = static_cast<double>(d.dim(1)) * d.dim(2);
    Tensor term = mul_scalar(g, norm, 1.0 / spatial);
    total = s == 0 ? term : add(g, total, term);
  }
  return total;
}

namespace detail {

// 11-tap binomial window C(10,k)/2^10, the dyadic approximation of a
// sigma ~ 1.5 Gaussian. Exact in binary floating point, so constant patches
// produce exact means.
inline const std::array<double, 11>& ssim_window_1d() {
  static const std::array<double, 11> w = [] {
    const double c[11] = {1, 10, 45, 120, 210, 252, 210, 120, 45, 10, 1};
    std::array<double, 11> out{};
    for (int i = 0; i < 11; ++i) out[static_cast<std::size_t>(i)] = c[i] / 1024.0;
    return out;
  }();
  return w;
}

// Depthwise 11x11 window as a block-diagonal [C,C,11,11] kernel; the conv2d
// zero-weight skip makes the off-diagonal blocks free.
inline Tensor ssim_window_kernel(int channels) {
  const auto& w1 = ssim_window_1d();
  Tensor k = Tensor::zeros({channels, channels, 11, 11});
  auto& kd = k.data();
  for (int c = 0; c < channels; ++c) {
    double* block = kd.data() + (static_cast<std::size_t>(c) * channels + c) * 121;
    for (int y = 0; y < 11; ++y) {
      for (int x = 0; x < 11; ++x) block[y * 11 + x] = w1[static_cast<std::size_t>(y)] * w1[static_cast<std::size_t>(x)];
    }
  }
  return k;
}

}  // namespace detail

struct SsimResult {
  Tensor map;   // channel-averaged per-window SSIM, [1,H-10,W-10]
  Tensor mean;  // scalar mean over channels and valid positions
};

// Windowed SSIM with C1 = 0.01^2 and C2 = 0.03^2 on a [0,1] dynamic range,
// evaluated at valid (non-padded) positions only.
inline SsimResult ssim_map(Graph& g, const Tensor& out, const Tensor& ref) {
  detail::check_same_shape(out, ref, "ssim");
  detail::check_chw(out, "ssim");
  if (out.dim(1) < 11 || out.dim(2) < 11) {
    throw DimensionError("ssim: spatial dims must be >= 11, got " + shape_str(out.shape()));
  }
  const int c = out.dim(0);
  const double k1 = 0.01, k2 = 0.03;
  const double c1 = k1 * k1, c2 = k2 * k2;
  Tensor win = detail::ssim_window_kernel(c);
  Tensor zero_bias = Tensor::zeros({c});
  auto blur = [&](const Tensor& x) { return conv2d(g, x, win, zero_bias, 1, 0); };

  Tensor mu_x = blur(out);
  Tensor mu_y = blur(ref);
  Tensor mu_xx = mul(g, mu_x, mu_x);
  Tensor mu_yy = mul(g, mu_y, mu_y);
  Tensor mu_xy = mul(g, mu_x, mu_y);
  Tensor sigma_xx = sub(g, blur(mul(g, out, out)), mu_xx);
  Tensor sigma_yy = sub(g, blur(mul(g, ref, ref)), mu_yy);
  Tensor sigma_xy = sub(g, blur(mul(g, out, ref)), mu_xy);

  Tensor num = mul(g, add_scalar(g, mul_scalar(g, mu_xy, 2.0), c1), add_scalar(g, mul_scalar(g, sigma_xy, 2.0), c2));
  Tensor den = mul(g, add_scalar(g, add(g, mu_xx, mu_yy), c1), add_scalar(g, add(g, sigma_xx, sigma_yy), c2));
  Tensor per_channel = div(g, num, den);

  SsimResult r;
  r.map = mul_scalar(g, sum_channels(g, per_channel), 1.0 / c);
  r.mean = mean(g, per_channel);
  return r;
}

// 1 - mean SSIM.
inline Tensor ssim_loss(Graph& g, const Tensor& out, const Tensor& ref) {
  return add_scalar(g, mul_scalar(g, ssim_map(g, out, ref).mean, -1.0), 1.0);
}

// Mean over pixels of (1 - cos angle) between RGB vectors. Pixels whose norm
// falls below 1e-8 in either image contribute 0 with zero gradient.
inline Tensor color_loss(Graph& g, const Tensor& out, const Tensor& ref) {
  detail::check_same_shape(out, ref, "color_loss");
  detail::check_chw(out, "color_loss");
  const double eps_norm = 1e-8;
  const double eps_sq = eps_norm * eps_norm;
  Tensor dot = sum_channels(g, mul(g, out, ref));
  Tensor sq_o = sum_channels(g, mul(g, out, out));
  Tensor sq_r = sum_channels(g, mul(g, ref, ref));
  Tensor norm_o = sqrt(g, clamp_min(g, sq_o, eps_sq));
  Tensor norm_r = sqrt(g, clamp_min(g, sq_r, eps_sq));
  Tensor cos_angle = div(g, dot, mul(g, norm_o, norm_r));

  // Guard mask built from forward values; constant w.r.t. the graph.
  Tensor mask = Tensor::zeros(dot.shape());
  for (std::size_t i = 0; i < mask.data().size(); ++i) {
    mask.data()[i] = (sq_o.data()[i] >= eps_sq && sq_r.data()[i] >= eps_sq) ? 1.0 : 0.0;
  }
  Tensor term = mul(g, mask, add_scalar(g, mul_scalar(g, cos_angle, -1.0), 1.0));
  return mean(g, term);
}

struct LossBreakdown {
  Tensor total;  // scalar on the graph
  double l_m = 0.0;
  double l_p = 0.0;
  double l_s = 0.0;
  double l_c = 0.0;
  double total_value = 0.0;
};

// Weighted sum of the four components. Components with zero weight are
// skipped entirely (their gradient contribution would be zero) and reported
// as 0 in the breakdown.
inline LossBreakdown total_loss(Graph& g, const Tensor& out, const Tensor& ref, const LossWeights& w,
                                const FeatureExtractor& ext) {
  if (w.lambda_m < 0 || w.lambda_p < 0 || w.lambda_s < 0 || w.lambda_c < 0) {
    throw PreconditionError("total_loss: loss weights must be >= 0");
  }
  LossBreakdown b;
  auto accumulate = [&](Tensor term, double lambda, double& slot) {
    slot = term.value();
    Tensor weighted = lambda == 1.0 ? term : mul_scalar(g, term, lambda);
    b.total = b.total.defined() ? add(g, b.total, weighted) : weighted;
  };
  if (w.lambda_m > 0) accumulate(l1_loss(g, out, ref), w.lambda_m, b.l_m);
  if (w.lambda_p > 0) accumulate(perceptual_loss(g, out, ref, ext), w.lambda_p, b.l_p);
  if (w.lambda_s > 0) accumulate(ssim_loss(g, out, ref), w.lambda_s, b.l_s);
  if (w.lambda_c > 0) accumulate(color_loss(g, out, ref), w.lambda_c, b.l_c);
  if (!b.total.defined()) b.total = Tensor::scalar(0.0);
  b.total_value = b.total.value();
  return b;
}

}  // namespace hazeforge
