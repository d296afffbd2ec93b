#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "medvsr/errors.hpp"
#include "medvsr/rng.hpp"

namespace medvsr {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    require(d >= 0, "shape: negative dimension");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

// Dense row-major tensor. Feature maps are [C,H,W]; token blocks are [R,C].
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    data_.assign(size_t(shape_numel(shape_)), T(0));
  }
  Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
    data_.assign(size_t(shape_numel(shape_)), fill);
  }
  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    require(int64_t(data_.size()) == shape_numel(shape_),
            "tensor: data size does not match shape " + shape_str(shape_));
  }

  const Shape& shape() const { return shape_; }
  int64_t dim(size_t i) const {
    require(i < shape_.size(), "tensor: dim index out of range");
    return shape_[i];
  }
  size_t rank() const { return shape_.size(); }
  int64_t numel() const { return int64_t(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](int64_t i) { return data_[size_t(i)]; }
  const T& operator[](int64_t i) const { return data_[size_t(i)]; }

  // Indexed access for the common ranks.
  T& at2(int64_t i, int64_t j) { return data_[size_t(i * shape_[1] + j)]; }
  const T& at2(int64_t i, int64_t j) const {
    return data_[size_t(i * shape_[1] + j)];
  }
  T& at3(int64_t i, int64_t j, int64_t k) {
    return data_[size_t((i * shape_[1] + j) * shape_[2] + k)];
  }
  const T& at3(int64_t i, int64_t j, int64_t k) const {
    return data_[size_t((i * shape_[1] + j) * shape_[2] + k)];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (int64_t i = 0; i < numel(); ++i) out[i] = U(data_[size_t(i)]);
    return out;
  }

  Tensor reshaped(Shape s) const {
    require(shape_numel(s) == numel(), "reshape: element count mismatch " +
                                           shape_str(shape_) + " -> " +
                                           shape_str(s));
    Tensor out = *this;
    out.shape_ = std::move(s);
    return out;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <class T>
Tensor<T> randn(const Shape& shape, Rng& rng, double stddev = 1.0) {
  Tensor<T> out(shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = T(rng.normal() * stddev);
  return out;
}

template <class T>
Tensor<T> rand_uniform(const Shape& shape, Rng& rng, double lo, double hi) {
  Tensor<T> out(shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = T(rng.uniform(lo, hi));
  return out;
}

template <class T>
bool all_finite(const Tensor<T>& t) {
  for (int64_t i = 0; i < t.numel(); ++i)
    if (!std::isfinite(double(t[i]))) return false;
  return true;
}

template <class T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.same_shape(b), "max_abs_diff: shape mismatch");
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

// Symmetric (triangle-wave) index fold into [0, n); valid for any offset,
// including |i| far beyond n, so padding may exceed the source extent.
inline int64_t reflect_index(int64_t i, int64_t n) {
  require(n > 0, "reflect_index: empty extent");
  if (n == 1) return 0;
  int64_t period = 2 * n;
  int64_t m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

template <class T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) return false;
  for (int64_t i = 0; i < a.numel(); ++i) {
    T x = a[i], y = b[i];
    if (std::memcmp(&x, &y, sizeof(T)) != 0) return false;
  }
  return true;
}

}  // namespace medvsr
