#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace asymprune {

// Dense row-major tensor of 64-bit floats. Data and gradient buffers are
// shared_ptrs so tensors can be copied cheaply and captured by backward
// closures; deep_copy() detaches storage.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<double>>(count(shape_), 0.0)) {}

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    for (double& x : *t.data_) x = value;
    return t;
  }

  static Tensor from_data(std::vector<int> shape, std::vector<double> values) {
    Tensor t;
    t.shape_ = std::move(shape);
    if (count(t.shape_) != static_cast<long long>(values.size()))
      throw std::invalid_argument("tensor: data length does not match shape");
    t.data_ = std::make_shared<std::vector<double>>(std::move(values));
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  long long size() const { return data_ ? static_cast<long long>(data_->size()) : 0; }
  bool defined() const { return static_cast<bool>(data_); }

  std::vector<double>& data() { return *data_; }
  const std::vector<double>& data() const { return *data_; }
  double* raw() { return data_->data(); }
  const double* raw() const { return data_->data(); }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) {
    requires_grad_ = on;
    if (on && !grad_) grad_ = std::make_shared<std::vector<double>>(data_->size(), 0.0);
  }

  bool has_grad() const { return static_cast<bool>(grad_); }
  std::vector<double>& grad() { return *grad_; }
  const std::vector<double>& grad() const { return *grad_; }
  void ensure_grad() {
    if (!grad_) grad_ = std::make_shared<std::vector<double>>(data_->size(), 0.0);
  }
  void zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
  }

  std::shared_ptr<std::vector<double>> data_handle() const { return data_; }
  std::shared_ptr<std::vector<double>> grad_handle() const { return grad_; }

  // Same metadata, shared storage, new shape. Element count must match.
  Tensor view(std::vector<int> new_shape) const {
    if (count(new_shape) != size())
      throw std::invalid_argument("tensor: view element count mismatch");
    Tensor t = *this;
    t.shape_ = std::move(new_shape);
    return t;
  }

  Tensor deep_copy() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<double>>(*data_);
    t.requires_grad_ = requires_grad_;
    if (grad_) t.grad_ = std::make_shared<std::vector<double>>(*grad_);
    return t;
  }

  static long long count(const std::vector<int>& shape) {
    long long n = 1;
    for (int d : shape) n *= d;
    return n;
  }

 private:
  std::vector<int> shape_;
  std::shared_ptr<std::vector<double>> data_;
  std::shared_ptr<std::vector<double>> grad_;
  bool requires_grad_ = false;
};

// Reverse-mode tape. Ops append one node per primitive application in
// execution order, which is a valid topological order; backward() replays
// the closures once each, in reverse.
class Tape {
 public:
  void record(const char* op, std::function<void()> backward_fn) {
    nodes_.push_back(Node{op, std::move(backward_fn)});
  }

  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  void run_backward() {
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward_fn();
  }

 private:
  struct Node {
    const char* op;
    std::function<void()> backward_fn;
  };
  std::vector<Node> nodes_;
};

// Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. Every tensor
// that was recorded with a grad buffer receives its accumulated gradient;
// parameters not reachable from the loss keep their (zeroed) grads.
void backward(Tape& tape, Tensor& loss);

}  // namespace asymprune
