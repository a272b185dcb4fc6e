#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hazeforge/losses.hpp"

using namespace hazeforge;

namespace {

Tensor random_image_tensor(uint64_t seed, int h, int w, double lo = 0.0, double hi = 1.0) {
  Tensor t = Tensor::zeros({3, h, w});
  Rng rng(seed);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

Tensor perturbed(const Tensor& x, uint64_t seed, double amplitude = 0.1) {
  Tensor y = x.clone();
  Rng rng(seed);
  for (auto& v : y.data()) v = std::clamp(v + rng.uniform(-amplitude, amplitude), 0.0, 1.0);
  return y;
}

// SSIM of two constant patches: variances vanish, so only the luminance
// term is active.
double constant_patch_ssim(double a, double b) {
  const double c1 = 0.01 * 0.01;
  return (2.0 * a * b + c1) / (a * a + b * b + c1);
}

}  // namespace

TEST_CASE("l1_loss values and gradient", "[losses][l1]") {
  Graph g(false);
  Tensor j = random_image_tensor(1, 8, 8);
  CHECK(l1_loss(g, j, j.clone()).value() == 0.0);
  CHECK(l1_loss(g, Tensor::from({1}, {0.2}), Tensor::from({1}, {0.5})).value() ==
        Catch::Approx(0.3).epsilon(1e-12));
  CHECK_THROWS_AS(l1_loss(g, j, Tensor::zeros({3, 4, 4})), DimensionError);

  // gradient is +1/N where J > Y
  Graph g2;
  Tensor a = Tensor::from({4}, {0.5, 0.6, 0.7, 0.8}, true);
  Tensor b = Tensor::from({4}, {0.1, 0.2, 0.9, 1.0});
  g2.backward(l1_loss(g2, a, b));
  CHECK(a.grad() == std::vector<double>{0.25, 0.25, -0.25, -0.25});
}

TEST_CASE("perceptual loss axioms", "[losses][perceptual]") {
  FeatureExtractor ext;
  Graph g(false);
  Tensor j = random_image_tensor(2, 16, 16);
  CHECK(perceptual_loss(g, j, j.clone(), ext).value() == 0.0);

  Tensor y = perturbed(j, 3);
  const double forward_v = perceptual_loss(g, j, y, ext).value();
  CHECK(forward_v > 0.0);
  CHECK(perceptual_loss(g, y, j, ext).value() == Catch::Approx(forward_v).epsilon(1e-12));

  CHECK_THROWS_AS(perceptual_loss(g, random_image_tensor(4, 8, 8), random_image_tensor(5, 8, 8), ext),
                  DimensionError);
}

TEST_CASE("feature extractor is frozen and deterministic", "[losses][perceptual]") {
  FeatureExtractor a;
  FeatureExtractor b;
  Graph g(false);
  Tensor x = random_image_tensor(6, 16, 16);
  auto sa = a.stages(g, x);
  auto sb = b.stages(g, x);
  for (int s = 0; s < 4; ++s) CHECK(sa[s].data() == sb[s].data());
  CHECK(sa[0].shape() == Shape{16, 8, 8});
  CHECK(sa[1].shape() == Shape{32, 4, 4});
  CHECK(sa[2].shape() == Shape{64, 2, 2});
  CHECK(sa[3].shape() == Shape{64, 1, 1});

  FeatureExtractor other(123);
  auto so = other.stages(g, x);
  CHECK(so[0].data() != sa[0].data());
}

TEST_CASE("ssim self-similarity and constant-patch closed form", "[losses][ssim]") {
  Graph g(false);
  Tensor x = random_image_tensor(7, 12, 12);
  CHECK(std::fabs(ssim_map(g, x, x.clone()).mean.value() - 1.0) < 1e-9);

  Tensor half = Tensor::full({3, 12, 12}, 0.5);
  Tensor seven = Tensor::full({3, 12, 12}, 0.7);
  const double expected = constant_patch_ssim(0.5, 0.7);
  CHECK(expected == Catch::Approx(0.946).margin(5e-4));  // the documented ~0.946
  CHECK(ssim_map(g, half, seven).mean.value() == Catch::Approx(expected).margin(1e-6));
  CHECK(ssim_loss(g, half, seven).value() == Catch::Approx(1.0 - expected).margin(1e-6));

  // mid-contrast image vs its negative scores below self-similarity
  Tensor mid = random_image_tensor(8, 12, 12, 0.25, 0.75);
  Tensor neg = mid.clone();
  for (auto& v : neg.data()) v = 1.0 - v;
  CHECK(ssim_map(g, mid, neg).mean.value() < 1.0);

  CHECK(ssim_loss(g, x, x.clone()).value() == Catch::Approx(0.0).margin(1e-9));
  CHECK_THROWS_AS(ssim_map(g, random_image_tensor(9, 8, 8), random_image_tensor(10, 8, 8)),
                  DimensionError);
}

TEST_CASE("ssim map shape covers exactly the valid window positions", "[losses][ssim]") {
  Graph g(false);
  Tensor a = random_image_tensor(11, 14, 20);
  auto r = ssim_map(g, a, perturbed(a, 12));
  CHECK(r.map.shape() == Shape{1, 4, 10});  // 14-10, 20-10
  for (double v : r.map.data()) CHECK(std::isfinite(v));
}

TEST_CASE("color loss geometry", "[losses][color]") {
  Graph g(false);

  Tensor red = Tensor::from({3, 1, 1}, {1.0, 0.0, 0.0});
  Tensor green = Tensor::from({3, 1, 1}, {0.0, 1.0, 0.0});
  CHECK(color_loss(g, red, green).value() == Catch::Approx(1.0).epsilon(1e-12));

  Tensor red2 = Tensor::from({3, 1, 1}, {2.0, 0.0, 0.0});
  CHECK(color_loss(g, red2, red).value() == Catch::Approx(0.0).margin(1e-12));

  Tensor j = random_image_tensor(13, 8, 8, 0.1, 1.0);
  CHECK(color_loss(g, j, j.clone()).value() == Catch::Approx(0.0).margin(1e-12));

  // positive per-pixel scaling is invisible to the color angle
  Tensor scaled = j.clone();
  for (auto& v : scaled.data()) v *= 1.7;
  CHECK(color_loss(g, j, scaled).value() == Catch::Approx(0.0).margin(1e-12));
  CHECK(l1_loss(g, j, scaled).value() > 0.0);

  // zero-norm pixels are guarded to a zero term
  Tensor black = Tensor::from({3, 1, 1}, {0.0, 0.0, 0.0});
  CHECK(color_loss(g, black, red).value() == 0.0);
  Graph g2;
  Tensor black_grad = Tensor::from({3, 1, 1}, {0.0, 0.0, 0.0}, true);
  g2.backward(color_loss(g2, black_grad, red));
  for (double v : black_grad.grad()) CHECK(v == 0.0);
}

TEST_CASE("color loss per-pixel terms stay in [0,1] on the positive octant", "[losses][color][property]") {
  for (uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(derive_seed(900, seed));
    Graph g(false);
    Tensor a = Tensor::zeros({3, 1, 1});
    Tensor b = Tensor::zeros({3, 1, 1});
    for (auto& v : a.data()) v = rng.uniform();
    for (auto& v : b.data()) v = rng.uniform();
    const double term = color_loss(g, a, b).value();  // single pixel: loss == term
    CHECK(term >= 0.0);
    CHECK(term <= 1.0);
  }
}

TEST_CASE("total loss composition and weight linearity", "[losses][total]") {
  FeatureExtractor ext;
  Graph g(false);
  Tensor j = random_image_tensor(14, 16, 16);
  Tensor y = perturbed(j, 15);
  LossWeights unit;

  auto all = total_loss(g, j, y, unit, ext);
  CHECK(all.total_value ==
        Catch::Approx(all.l_m + all.l_p + all.l_s + all.l_c).margin(1e-12));
  CHECK(all.l_m == Catch::Approx(l1_loss(g, j, y).value()).margin(1e-15));
  CHECK(all.l_p == Catch::Approx(perceptual_loss(g, j, y, ext).value()).margin(1e-15));
  CHECK(all.l_s == Catch::Approx(ssim_loss(g, j, y).value()).margin(1e-15));
  CHECK(all.l_c == Catch::Approx(color_loss(g, j, y).value()).margin(1e-15));

  // identical inputs: zero everywhere
  auto zero = total_loss(g, j, j.clone(), unit, ext);
  CHECK(zero.total_value == Catch::Approx(0.0).margin(1e-9));
  CHECK(zero.l_m == 0.0);

  // lambda_c = 0 drops exactly the color term
  LossWeights no_color = unit;
  no_color.lambda_c = 0.0;
  auto wo = total_loss(g, j, y, no_color, ext);
  CHECK(wo.l_c == 0.0);
  CHECK(wo.total_value == Catch::Approx(all.l_m + all.l_p + all.l_s).margin(1e-12));

  // linear in the weight vector
  LossWeights doubled{2.0, 2.0, 2.0, 2.0};
  CHECK(total_loss(g, j, y, doubled, ext).total_value == Catch::Approx(2.0 * all.total_value).margin(1e-12));

  LossWeights bad;
  bad.lambda_m = -1.0;
  CHECK_THROWS_AS(total_loss(g, j, y, bad, ext), PreconditionError);
}

TEST_CASE("every component is positive on perturbed pairs", "[losses][property]") {
  FeatureExtractor ext;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Graph g(false);
    Tensor j = random_image_tensor(derive_seed(500, seed), 16, 16, 0.05, 0.95);
    Tensor y = perturbed(j, derive_seed(501, seed), 0.2);
    INFO("seed " << seed);
    CHECK(l1_loss(g, j, y).value() > 0.0);
    CHECK(perceptual_loss(g, j, y, ext).value() > 0.0);
    CHECK(ssim_loss(g, j, y).value() > 0.0);
    CHECK(color_loss(g, j, y).value() > 0.0);
  }
}
