#pragma once

#include <functional>
#include <string>

#include "medvsr/tensor.hpp"

namespace medvsr {

template <class T>
using ParamFn = std::function<void(const std::string&, Tensor<T>&)>;

// Fan-in scaled normal initialization for linear / conv weights.
template <class T>
Tensor<T> init_weight(const Shape& shape, int64_t fan_in, Rng& rng) {
  require(fan_in > 0, "init_weight: bad fan-in");
  return randn<T>(shape, rng, 1.0 / std::sqrt(double(fan_in)));
}

inline double softplus_inv(double y) {
  require(y > 0, "softplus_inv: argument must be positive");
  return std::log(std::expm1(y));
}

// Timescale bias so that softplus(bias) lands log-uniformly in [lo, hi].
template <class T>
Tensor<T> init_dt_bias(int64_t n, Rng& rng, double lo = 1e-3, double hi = 0.1) {
  Tensor<T> t({n});
  for (int64_t i = 0; i < n; ++i) {
    double u = std::exp(rng.uniform(std::log(lo), std::log(hi)));
    t[i] = T(softplus_inv(u));
  }
  return t;
}

// State-transition log-magnitudes: A = -exp(a_log), a_log = ln u,
// u log-uniform in [1, 16].
template <class T>
Tensor<T> init_a_log(int64_t n, Rng& rng) {
  Tensor<T> t({n});
  for (int64_t i = 0; i < n; ++i)
    t[i] = T(rng.uniform(std::log(1.0), std::log(16.0)));
  return t;
}

}  // namespace medvsr
