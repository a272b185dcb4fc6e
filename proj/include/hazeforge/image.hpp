#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "hazeforge/tensor.hpp"

namespace hazeforge {

// H x W x 3 raster with channel values in [0,1], stored planar (channel,
// row, column) so tensor conversion is a straight copy.
class Image {
 public:
  Image() = default;

  Image(int height, int width) : h_(height), w_(width) {
    if (height < 1 || width < 1) throw DimensionError("image dimensions must be positive");
    data_.assign(static_cast<std::size_t>(3) * height * width, 0.0);
  }

  int height() const { return h_; }
  int width() const { return w_; }
  int64_t pixels() const { return static_cast<int64_t>(h_) * w_; }

  double& at(int c, int y, int x) { return data_[idx(c, y, x)]; }
  double at(int c, int y, int x) const { return data_[idx(c, y, x)]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  Tensor to_tensor(bool requires_grad = false) const {
    return Tensor::from({3, h_, w_}, data_, requires_grad);
  }

  // Export path for network outputs: clamps to [0,1] so the image invariant
  // holds regardless of what the graph produced.
  static Image from_tensor(const Tensor& t) {
    if (t.rank() != 3 || t.dim(0) != 3) {
      throw DimensionError("from_tensor: expected [3,H,W], got " + shape_str(t.shape()));
    }
    Image img(t.dim(1), t.dim(2));
    const auto& td = t.data();
    for (std::size_t i = 0; i < td.size(); ++i) img.data_[i] = std::clamp(td[i], 0.0, 1.0);
    return img;
  }

 private:
  std::size_t idx(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * h_ + y) * w_ + x;
  }

  int h_ = 0;
  int w_ = 0;
  std::vector<double> data_;
};

namespace detail {

inline int ppm_next_token(std::istream& in, std::string& tok) {
  tok.clear();
  int ch = in.get();
  // Skip whitespace and '#' comments.
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (std::isspace(ch)) {
      ch = in.get();
    } else {
      break;
    }
  }
  while (ch != EOF && !std::isspace(ch)) {
    tok.push_back(static_cast<char>(ch));
    ch = in.get();
  }
  return tok.empty() ? EOF : 0;
}

}  // namespace detail

// Reads a binary P6 PPM with maxval 255.
inline Image read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::string tok;
  if (detail::ppm_next_token(f, tok) == EOF || tok != "P6") {
    throw IoError(path + ": not a P6 PPM file");
  }
  auto read_int = [&](const char* what) {
    if (detail::ppm_next_token(f, tok) == EOF) throw IoError(path + ": truncated header");
    try {
      std::size_t used = 0;
      long v = std::stol(tok, &used);
      if (used != tok.size() || v < 1) throw std::invalid_argument(what);
      return static_cast<int>(v);
    } catch (const std::exception&) {
      throw IoError(path + ": bad " + what + " in header");
    }
  };
  const int w = read_int("width");
  const int h = read_int("height");
  const int maxval = read_int("maxval");
  if (maxval != 255) throw IoError(path + ": unsupported maxval " + std::to_string(maxval));
  // Exactly one whitespace byte separates the header from the raster.
  std::vector<unsigned char> raw(static_cast<std::size_t>(3) * w * h);
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(f.gcount()) != raw.size()) throw IoError(path + ": truncated pixel data");
  Image img(h, w);
  std::size_t p = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        img.at(c, y, x) = static_cast<double>(raw[p++]) / 255.0;
      }
    }
  }
  return img;
}

// Writes a binary P6 PPM with maxval 255, round-to-nearest quantization.
inline void write_ppm(const std::string& path, const Image& img) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "P6\n" << img.width() << " " << img.height() << "\n255\n";
  std::vector<unsigned char> raw;
  raw.reserve(static_cast<std::size_t>(3) * img.pixels());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
        raw.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
      }
    }
  }
  f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!f) throw IoError("write failed: " + path);
}

}  // namespace hazeforge
