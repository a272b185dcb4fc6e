#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hazeforge/image.hpp"
#include "hazeforge/rng.hpp"

namespace hazeforge {

// Global lower bound on transmittance; keeps the scattering model away from
// the fully opaque singularity.
inline constexpr double kTransmissionFloor = 0.02;

// Minimum transmittance for which the analytic inversion is accepted.
inline constexpr double kInversionFloor = 0.05;

// Per-pixel transmittance map, every value in [kTransmissionFloor, 1].
class TransmissionField {
 public:
  TransmissionField(int height, int width, std::vector<double> t) : h_(height), w_(width), t_(std::move(t)) {
    if (height < 1 || width < 1 || t_.size() != static_cast<std::size_t>(height) * width) {
      throw DimensionError("transmission field size mismatch");
    }
    for (double v : t_) {
      if (!(v >= kTransmissionFloor && v <= 1.0)) {
        throw PreconditionError("transmittance out of [" + std::to_string(kTransmissionFloor) + ",1]: " +
                                std::to_string(v));
      }
    }
  }

  int height() const { return h_; }
  int width() const { return w_; }
  double at(int y, int x) const { return t_[static_cast<std::size_t>(y) * w_ + x]; }
  const std::vector<double>& values() const { return t_; }

  double min() const { return *std::min_element(t_.begin(), t_.end()); }
  double max() const { return *std::max_element(t_.begin(), t_.end()); }
  double mean() const {
    double acc = 0.0;
    for (double v : t_) acc += v;
    return acc / static_cast<double>(t_.size());
  }
  bool homogeneous() const { return max() - min() < 1e-12; }

 private:
  int h_, w_;
  std::vector<double> t_;
};

// Global atmospheric light, one scalar shared by all three channels.
struct AtmosphericLight {
  explicit AtmosphericLight(double v) : value(v) {
    if (!(v > 0.0 && v <= 1.0)) {
      throw PreconditionError("atmospheric light must lie in (0,1], got " + std::to_string(v));
    }
  }
  double value;
};

// Scattering-model synthesis: I = J*t + A*(1-t), per pixel and channel.
inline Image synthesize(const Image& clean, AtmosphericLight a, const TransmissionField& t) {
  if (clean.height() != t.height() || clean.width() != t.width()) {
    throw DimensionError("synthesize: image/transmission size mismatch");
  }
  Image out(clean.height(), clean.width());
  for (int y = 0; y < clean.height(); ++y) {
    for (int x = 0; x < clean.width(); ++x) {
      const double tv = t.at(y, x);
      const double air = a.value * (1.0 - tv);
      for (int c = 0; c < 3; ++c) {
        out.at(c, y, x) = std::clamp(clean.at(c, y, x) * tv + air, 0.0, 1.0);
      }
    }
  }
  return out;
}

// Analytic inversion J = (I - A*(1-t)) / t, the oracle counterpart of
// synthesize. Requires min(t) >= kInversionFloor for numerical stability.
inline Image invert_asm(const Image& hazy, AtmosphericLight a, const TransmissionField& t) {
  if (hazy.height() != t.height() || hazy.width() != t.width()) {
    throw DimensionError("invert_asm: image/transmission size mismatch");
  }
  if (t.min() < kInversionFloor) {
    throw PreconditionError("invert_asm: min transmittance " + std::to_string(t.min()) + " below stability floor " +
                            std::to_string(kInversionFloor));
  }
  Image out(hazy.height(), hazy.width());
  for (int y = 0; y < hazy.height(); ++y) {
    for (int x = 0; x < hazy.width(); ++x) {
      const double tv = t.at(y, x);
      const double air = a.value * (1.0 - tv);
      for (int c = 0; c < 3; ++c) {
        out.at(c, y, x) = std::clamp((hazy.at(c, y, x) - air) / tv, 0.0, 1.0);
      }
    }
  }
  return out;
}

inline TransmissionField make_homogeneous_field(int height, int width, double t) {
  if (!(t >= kTransmissionFloor && t <= 1.0)) {
    throw PreconditionError("homogeneous transmittance must lie in [" + std::to_string(kTransmissionFloor) +
                            ",1], got " + std::to_string(t));
  }
  return TransmissionField(height, width, std::vector<double>(static_cast<std::size_t>(height) * width, t));
}

namespace detail {

// Symmetric border reflection: -1 -> 0, n -> n-1. Iterates until in range so
// overhangs larger than the image stay defined.
inline int reflect_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

// One 3x3 box-blur pass with reflected borders.
inline void box_blur3(std::vector<double>& v, int h, int w) {
  std::vector<double> out(v.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        const int yy = reflect_index(y + dy, h);
        for (int dx = -1; dx <= 1; ++dx) {
          acc += v[static_cast<std::size_t>(yy) * w + reflect_index(x + dx, w)];
        }
      }
      out[static_cast<std::size_t>(y) * w + x] = acc / 9.0;
    }
  }
  v.swap(out);
}

}  // namespace detail

// Spatially varying field: seeded white noise, box-blurred `smoothness`
// times, then affinely rescaled so min = t_lo and max = t_hi exactly.
inline TransmissionField gen_t_field(int height, int width, uint64_t seed, double t_lo, double t_hi,
                                     int smoothness) {
  if (!(t_lo >= kTransmissionFloor && t_lo < t_hi && t_hi <= 1.0)) {
    throw PreconditionError("gen_t_field: need " + std::to_string(kTransmissionFloor) +
                            " <= t_lo < t_hi <= 1");
  }
  if (smoothness < 0) throw PreconditionError("gen_t_field: smoothness must be >= 0");
  std::vector<double> v(static_cast<std::size_t>(height) * width);
  Rng rng(seed);
  for (auto& x : v) x = rng.uniform();
  for (int i = 0; i < smoothness; ++i) detail::box_blur3(v, height, width);
  const double lo = *std::min_element(v.begin(), v.end());
  const double hi = *std::max_element(v.begin(), v.end());
  const double span = hi - lo;
  if (span < 1e-300) {
    std::fill(v.begin(), v.end(), 0.5 * (t_lo + t_hi));
  } else {
    for (auto& x : v) x = t_lo + (x - lo) / span * (t_hi - t_lo);
    // Guard the affine rescale against rounding drift at the extremes.
    for (auto& x : v) x = std::clamp(x, t_lo, t_hi);
  }
  return TransmissionField(height, width, std::move(v));
}

// Procedural haze-free image: a two-color linear gradient, 2..5 solid
// rectangles/discs, and low-amplitude smoothed noise.
inline Image gen_clean_image(int height, int width, uint64_t seed) {
  Image img(height, width);
  Rng rng(seed);

  double c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = rng.uniform(0.0, 0.35);
    c1[c] = rng.uniform(0.65, 1.0);
    if (rng.uniform() < 0.5) std::swap(c0[c], c1[c]);
  }
  const double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  const double dx = std::cos(angle), dy = std::sin(angle);
  double smin = 0.0, smax = 0.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double s = dx * x + dy * y;
      smin = std::min(smin, s);
      smax = std::max(smax, s);
    }
  }
  const double sspan = std::max(smax - smin, 1e-12);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double s = (dx * x + dy * y - smin) / sspan;
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = c0[c] + s * (c1[c] - c0[c]);
    }
  }

  const int num_shapes = 2 + static_cast<int>(rng.index(4));
  const double base = static_cast<double>(std::min(height, width));
  for (int sh = 0; sh < num_shapes; ++sh) {
    const bool disc = rng.uniform() < 0.5;
    double color[3];
    for (int c = 0; c < 3; ++c) color[c] = rng.uniform();
    const double cx = rng.uniform(0.0, width - 1.0);
    const double cy = rng.uniform(0.0, height - 1.0);
    if (disc) {
      const double r = (0.10 + 0.20 * rng.uniform()) * base;
      const double r2 = r * r;
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          const double ddx = x - cx, ddy = y - cy;
          if (ddx * ddx + ddy * ddy <= r2) {
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = color[c];
          }
        }
      }
    } else {
      const double hw = (0.08 + 0.22 * rng.uniform()) * base;
      const double hh = (0.08 + 0.22 * rng.uniform()) * base;
      const int x0 = std::max(0, static_cast<int>(std::floor(cx - hw)));
      const int x1 = std::min(width - 1, static_cast<int>(std::ceil(cx + hw)));
      const int y0 = std::max(0, static_cast<int>(std::floor(cy - hh)));
      const int y1 = std::min(height - 1, static_cast<int>(std::ceil(cy + hh)));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          for (int c = 0; c < 3; ++c) img.at(c, y, x) = color[c];
        }
      }
    }
  }

  for (int c = 0; c < 3; ++c) {
    std::vector<double> noise(static_cast<std::size_t>(height) * width);
    for (auto& v : noise) v = rng.uniform(-1.0, 1.0);
    detail::box_blur3(noise, height, width);
    detail::box_blur3(noise, height, width);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        img.at(c, y, x) =
            std::clamp(img.at(c, y, x) + 0.04 * noise[static_cast<std::size_t>(y) * width + x], 0.0, 1.0);
      }
    }
  }
  return img;
}

// One haze-concentration range; index is 1-based.
struct ConcentrationBin {
  int index;
  double t_lo;
  double t_hi;
};

// n equal-width contiguous bins covering [t_min, t_max].
inline std::vector<ConcentrationBin> partition_bins(int n, double t_min, double t_max) {
  if (n < 1) throw PreconditionError("partition_bins: n must be >= 1");
  if (!(t_min >= kTransmissionFloor && t_min < t_max && t_max <= 1.0)) {
    throw PreconditionError("partition_bins: need " + std::to_string(kTransmissionFloor) +
                            " <= t_min < t_max <= 1");
  }
  std::vector<ConcentrationBin> bins;
  bins.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double lo = t_min + (t_max - t_min) * static_cast<double>(i) / n;
    const double hi = t_min + (t_max - t_min) * static_cast<double>(i + 1) / n;
    bins.push_back({i + 1, lo, hi});
  }
  bins.front().t_lo = t_min;
  bins.back().t_hi = t_max;
  return bins;
}

// Index of the bin containing t_mean; a value on a shared boundary belongs
// to the lower-indexed bin.
inline int assign_bin(double t_mean, const std::vector<ConcentrationBin>& bins) {
  if (bins.empty()) throw PreconditionError("assign_bin: no bins");
  if (t_mean < bins.front().t_lo || t_mean > bins.back().t_hi) {
    throw PreconditionError("assign_bin: t_mean " + std::to_string(t_mean) + " outside [" +
                            std::to_string(bins.front().t_lo) + "," + std::to_string(bins.back().t_hi) + "]");
  }
  for (const auto& b : bins) {
    if (t_mean <= b.t_hi) return b.index;
  }
  return bins.back().index;
}

}  // namespace hazeforge
