#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hazeforge/tensor.hpp"

namespace hazeforge {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Ordered collection of named parameter tensors. Order is the canonical
// serialization and optimizer order, so it must stay stable.
class ParamSet {
 public:
  void add(std::string name, Tensor t) {
    if (contains(name)) throw ContractError("duplicate parameter name: " + name);
    items_.push_back({std::move(name), std::move(t)});
  }

  bool contains(const std::string& name) const {
    for (const auto& it : items_) {
      if (it.name == name) return true;
    }
    return false;
  }

  const Tensor& at(const std::string& name) const {
    for (const auto& it : items_) {
      if (it.name == name) return it.tensor;
    }
    throw ContractError("unknown parameter name: " + name);
  }

  Tensor& at(const std::string& name) {
    for (auto& it : items_) {
      if (it.name == name) return it.tensor;
    }
    throw ContractError("unknown parameter name: " + name);
  }

  std::size_t size() const { return items_.size(); }
  const NamedTensor& item(std::size_t i) const { return items_[i]; }

  std::vector<NamedTensor>::const_iterator begin() const { return items_.begin(); }
  std::vector<NamedTensor>::const_iterator end() const { return items_.end(); }

  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    out.reserve(items_.size());
    for (const auto& it : items_) out.push_back(it.tensor);
    return out;
  }

  int64_t num_elements() const {
    int64_t n = 0;
    for (const auto& it : items_) n += it.tensor.size();
    return n;
  }

  ParamSet clone() const {
    ParamSet out;
    for (const auto& it : items_) out.items_.push_back({it.name, it.tensor.clone()});
    return out;
  }

  void zero_grad() {
    for (auto& it : items_) it.tensor.zero_grad();
  }

  // FNV-1a over names, shapes and raw data bits. Used for frozen-weights
  // integrity checks; not a cryptographic hash.
  uint64_t content_hash() const {
    uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const void* p, std::size_t n) {
      const unsigned char* b = static_cast<const unsigned char*>(p);
      for (std::size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 0x100000001b3ull;
      }
    };
    for (const auto& it : items_) {
      mix(it.name.data(), it.name.size());
      for (int d : it.tensor.shape()) {
        uint32_t u = static_cast<uint32_t>(d);
        mix(&u, sizeof(u));
      }
      mix(it.tensor.data().data(), it.tensor.data().size() * sizeof(double));
    }
    return h;
  }

 private:
  std::vector<NamedTensor> items_;
};

}  // namespace hazeforge
