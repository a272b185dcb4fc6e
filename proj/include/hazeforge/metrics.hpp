#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "hazeforge/haze.hpp"
#include "hazeforge/image.hpp"
#include "hazeforge/losses.hpp"

namespace hazeforge {

// Peak signal-to-noise ratio in dB with peak 1.0, MSE over all elements.
// Zero MSE is capped at 99 dB to keep reports finite.
inline constexpr double kPsnrCap = 99.0;

inline double psnr(const Image& a, const Image& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw DimensionError("psnr: image sizes differ");
  }
  const auto& ad = a.data();
  const auto& bd = b.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < ad.size(); ++i) {
    const double d = ad[i] - bd[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(ad.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

// Same windowed SSIM as the structural loss, evaluated without a tape.
inline double ssim_metric(const Image& a, const Image& b) {
  Graph g(false);
  return ssim_map(g, a.to_tensor(), b.to_tensor()).mean.value();
}

// Per-pixel minimum over an odd patch neighborhood (reflected borders) of
// the channel minimum. Returns an H*W row-major map.
inline std::vector<double> dark_channel(const Image& img, int patch) {
  if (patch < 1 || patch % 2 == 0) {
    throw PreconditionError("dark_channel: patch must be odd and >= 1, got " + std::to_string(patch));
  }
  const int h = img.height(), w = img.width();
  std::vector<double> channel_min(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      channel_min[static_cast<std::size_t>(y) * w + x] =
          std::min({img.at(0, y, x), img.at(1, y, x), img.at(2, y, x)});
    }
  }
  const int r = patch / 2;
  std::vector<double> out(channel_min.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double m = 1.0;
      for (int dy = -r; dy <= r; ++dy) {
        const int yy = detail::reflect_index(y + dy, h);
        for (int dx = -r; dx <= r; ++dx) {
          m = std::min(m, channel_min[static_cast<std::size_t>(yy) * w + detail::reflect_index(x + dx, w)]);
        }
      }
      out[static_cast<std::size_t>(y) * w + x] = m;
    }
  }
  return out;
}

// No-reference haze-density proxy: mean dark channel with a 15x15 patch.
// Haze lifts local minima toward the airlight, so denser haze scores higher.
inline double haze_density_proxy(const Image& img) {
  const auto dc = dark_channel(img, 15);
  double acc = 0.0;
  for (double v : dc) acc += v;
  return acc / static_cast<double>(dc.size());
}

struct EvalRow {
  std::string id;
  double psnr = 0.0;
  double ssim = 0.0;
  double density_hazy = 0.0;
  double density_output = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  double mean_psnr() const { return mean([](const EvalRow& r) { return r.psnr; }); }
  double mean_ssim() const { return mean([](const EvalRow& r) { return r.ssim; }); }
  double mean_density_hazy() const { return mean([](const EvalRow& r) { return r.density_hazy; }); }
  double mean_density_output() const { return mean([](const EvalRow& r) { return r.density_output; }); }

 private:
  template <typename F>
  double mean(F f) const {
    double acc = 0.0;
    for (const auto& r : rows) acc += f(r);
    return rows.empty() ? 0.0 : acc / static_cast<double>(rows.size());
  }
};

inline void write_eval_report(const std::string& path, const EvalReport& report) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  char buf[256];
  f << "#id\tpsnr\tssim\tdensity_hazy\tdensity_output\n";
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%s\t%.17g\t%.17g\t%.17g\t%.17g\n", r.id.c_str(), r.psnr, r.ssim,
                  r.density_hazy, r.density_output);
    f << buf;
  }
  std::snprintf(buf, sizeof(buf), "MEAN\t%.17g\t%.17g\t%.17g\t%.17g\n", report.mean_psnr(),
                report.mean_ssim(), report.mean_density_hazy(), report.mean_density_output());
  f << buf;
  if (!f) throw IoError("write failed: " + path);
}

}  // namespace hazeforge
