#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "hazeforge/params.hpp"

namespace hazeforge {

// CPW1 weights container, little-endian:
//   magic "CPW1" | u32 tensor count
//   per tensor: u32 name length | name bytes (UTF-8) | u32 rank |
//               u32 dims[rank] | f64 data, row-major
namespace detail {

inline void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) {
  uint64_t bits = std::bit_cast<uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  ByteReader(const std::string& buf, std::string path) : buf_(buf), path_(std::move(path)) {}

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  double f64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool exhausted() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > buf_.size()) throw IoError(path_ + ": truncated CPW1 file");
  }
  const std::string& buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline void save_cpw(const std::string& path, const ParamSet& params) {
  std::string out;
  out += "CPW1";
  detail::put_u32(out, static_cast<uint32_t>(params.size()));
  for (const auto& it : params) {
    detail::put_u32(out, static_cast<uint32_t>(it.name.size()));
    out += it.name;
    const Shape& s = it.tensor.shape();
    detail::put_u32(out, static_cast<uint32_t>(s.size()));
    for (int d : s) detail::put_u32(out, static_cast<uint32_t>(d));
    for (double v : it.tensor.data()) detail::put_f64(out, v);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path);
}

inline ParamSet load_cpw(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  detail::ByteReader r(buf, path);
  if (r.bytes(4) != "CPW1") throw IoError(path + ": unknown magic, expected CPW1");
  const uint32_t count = r.u32();
  if (count > 100000) throw IoError(path + ": implausible tensor count");
  ParamSet params;
  for (uint32_t t = 0; t < count; ++t) {
    const uint32_t name_len = r.u32();
    if (name_len == 0 || name_len > 4096) throw IoError(path + ": implausible tensor name length");
    std::string name = r.bytes(name_len);
    const uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw IoError(path + ": implausible tensor rank");
    Shape shape(rank);
    int64_t n = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      const uint32_t d = r.u32();
      if (d == 0 || d > (1u << 24)) throw IoError(path + ": implausible dimension");
      shape[i] = static_cast<int>(d);
      n *= d;
    }
    if (n > (int64_t{1} << 28)) throw IoError(path + ": implausible tensor size");
    std::vector<double> data(static_cast<std::size_t>(n));
    for (auto& v : data) v = r.f64();
    params.add(std::move(name), Tensor::from(std::move(shape), std::move(data), true));
  }
  if (!r.exhausted()) throw IoError(path + ": trailing bytes after last tensor");
  return params;
}

}  // namespace hazeforge
