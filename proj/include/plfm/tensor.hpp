#pragma once

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace plfm {

/// Dense row-major tensor of doubles. Rank and extents are dynamic;
/// interpretation of the axes (HWC image, NCHW activation, ...) is up to
/// the caller.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(count(shape_)), 0.0);
  }

  Tensor(std::initializer_list<int> shape) : Tensor(std::vector<int>(shape)) {}

  static Tensor full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  double& at(int a) { return data_[static_cast<size_t>(a)]; }
  double at(int a) const { return data_[static_cast<size_t>(a)]; }
  double& at(int a, int b) { return data_[idx2(a, b)]; }
  double at(int a, int b) const { return data_[idx2(a, b)]; }
  double& at(int a, int b, int c) { return data_[idx3(a, b, c)]; }
  double at(int a, int b, int c) const { return data_[idx3(a, b, c)]; }
  double& at(int a, int b, int c, int d) { return data_[idx4(a, b, c, d)]; }
  double at(int a, int b, int c, int d) const { return data_[idx4(a, b, c, d)]; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor& operator+=(const Tensor& o) {
    assert(numel() == o.numel());
    for (int64_t i = 0; i < numel(); ++i) data_[static_cast<size_t>(i)] += o[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    assert(numel() == o.numel());
    for (int64_t i = 0; i < numel(); ++i) data_[static_cast<size_t>(i)] -= o[i];
    return *this;
  }
  Tensor& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  /// Reinterpret the flat buffer with a new shape of equal element count.
  Tensor reshaped(std::vector<int> shape) const {
    if (count(shape) != numel()) throw std::invalid_argument("tensor: reshape count mismatch");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
  }

  static int64_t count(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
      if (d < 0) throw std::invalid_argument("tensor: negative extent");
      n *= d;
    }
    return n;
  }

  static std::string shape_str(const std::vector<int>& shape) {
    std::string s = "(";
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + ")";
  }

 private:
  size_t idx2(int a, int b) const {
    assert(rank() == 2);
    return static_cast<size_t>(a) * shape_[1] + b;
  }
  size_t idx3(int a, int b, int c) const {
    assert(rank() == 3);
    return (static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c;
  }
  size_t idx4(int a, int b, int c, int d) const {
    assert(rank() == 4);
    return ((static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d;
  }

  std::vector<int> shape_;
  std::vector<double> data_;
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

}  // namespace plfm
