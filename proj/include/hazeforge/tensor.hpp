#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hazeforge/common.hpp"

namespace hazeforge {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // same length as data once backward touched it
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

// Handle over shared fp64 storage, row-major. Copies alias the same buffer
// (parameters stay shared between a model and its optimizer); clone() makes
// an independent deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return make(std::move(shape), 0.0, requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    return make(std::move(shape), value, requires_grad);
  }

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
    if (static_cast<int64_t>(data.size()) != shape_numel(shape)) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    }
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(data);
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(double value) { return from({1}, {value}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(impl_->data.size()); }

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }

  bool has_grad() const { return impl_->grad.size() == impl_->data.size(); }
  std::vector<double>& grad() {
    impl_->ensure_grad();
    return impl_->grad;
  }
  const std::vector<double>& grad() const {
    if (!has_grad()) throw ContractError("tensor has no gradient; run backward first");
    return impl_->grad;
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool b) { impl_->requires_grad = b; }
  void zero_grad() {
    if (defined()) impl_->grad.assign(impl_->data.size(), 0.0);
  }

  // Value of a one-element tensor.
  double value() const {
    if (size() != 1) throw ContractError("value() requires a one-element tensor, got " + shape_str(shape()));
    return impl_->data[0];
  }

  Tensor clone() const {
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl>(*impl_);
    return t;
  }

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

 private:
  static Tensor make(Shape shape, double fill, bool requires_grad) {
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl>();
    int64_t n = shape_numel(shape);
    if (n <= 0) throw DimensionError("tensor shape must have positive dimensions, got " + shape_str(shape));
    t.impl_->shape = std::move(shape);
    t.impl_->data.assign(static_cast<std::size_t>(n), fill);
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  std::shared_ptr<TensorImpl> impl_;
};

// Eager per-pass tape. Ops append their backward closures as they execute,
// so the tape is already in topological order; backward replays it once in
// reverse, by which point every consumer of a tensor has contributed its
// gradient before the producer reads it.
//
// A Graph is confined to one thread and is single-use: build a forward pass,
// call backward, discard. Construct with recording=false for value-only
// evaluation (no closures retained, no gradients).
class Graph {
 public:
  explicit Graph(bool recording = true) : recording_(recording) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return recording_; }

  void record(std::function<void()> backward_fn) {
    if (recording_) tape_.push_back(std::move(backward_fn));
  }

  std::size_t num_ops() const { return tape_.size(); }

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every tensor
  // recorded on this tape. The tape is consumed.
  void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
      throw ContractError("backward requires a scalar loss tensor");
    }
    if (consumed_) throw ContractError("backward already ran on this graph");
    consumed_ = true;
    loss.impl()->ensure_grad();
    loss.impl()->grad[0] = 1.0;
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
    tape_.clear();
  }

 private:
  bool recording_;
  bool consumed_ = false;
  std::vector<std::function<void()>> tape_;
};

}  // namespace hazeforge
