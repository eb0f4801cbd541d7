#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "stzoo/common.hpp"

namespace stzoo {

// Dense row-major n-d array. Owns its storage; copies are deep.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape) { resize(std::move(shape)); }

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int64_t> shape, T v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
  }

  void resize(std::vector<int64_t> shape) {
    shape_ = std::move(shape);
    int64_t n = 1;
    for (int64_t d : shape_) {
      if (d < 0) throw ShapeError("negative tensor dimension");
      n *= d;
    }
    data_.assign(static_cast<size_t>(n), T(0));
  }

  Tensor& reshape(std::vector<int64_t> shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    if (n != numel()) throw ShapeError(cat("reshape from ", numel(), " to ", n, " elements"));
    shape_ = std::move(shape);
    return *this;
  }

  const std::vector<int64_t>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  T& at(std::initializer_list<int64_t> idx) { return data_[static_cast<size_t>(offset(idx))]; }
  const T& at(std::initializer_list<int64_t> idx) const {
    return data_[static_cast<size_t>(offset(idx))];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T(0)); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  int64_t offset(std::initializer_list<int64_t> idx) const {
    if (static_cast<int>(idx.size()) != ndim()) throw ShapeError("index rank mismatch");
    int64_t off = 0;
    int i = 0;
    for (int64_t v : idx) {
      off = off * shape_[static_cast<size_t>(i)] + v;
      ++i;
    }
    return off;
  }

  std::vector<int64_t> shape_;
  std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace stzoo
