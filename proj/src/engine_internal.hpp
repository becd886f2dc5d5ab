#pragma once

// Engine internals shared with the trainer's backpropagation. Not installed.

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "lrp2/engine.hpp"

namespace lrp2::detail {

inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
struct LayerCache {
  Matrix<T> x_in;
  Matrix<T> ln1_hat, ln1_out;
  std::vector<T> ln1_rstd;
  Matrix<T> q, k, v;
  std::vector<Matrix<T>> probs;  // one [seq, seq] matrix per head
  Matrix<T> ctx;
  Matrix<T> x_mid;
  Matrix<T> ln2_hat, ln2_out;
  std::vector<T> ln2_rstd;
  Matrix<T> u;  // FFN pre-activation
  Matrix<T> g;  // FFN post-GELU activation
};

template <typename T>
struct ForwardCache {
  std::vector<LayerCache<T>> layers;
  Matrix<T> final_hat, final_out;
  std::vector<T> final_rstd;
};

// Full forward; fills `cache` when non-null (hooks and resume must be unused
// in that case).
template <typename T>
BasicTrace<T> forward_impl(const BasicModel<T>& model, std::span<const TokenId> tokens,
                           std::span<const BasicHook<T>> hooks, const ForwardOptions<T>& options,
                           ForwardCache<T>* cache);

template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::sqrt(T(2))));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / std::sqrt(T(2))));
  const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
  return cdf + x * pdf;
}

// y[s, out] = x[s, in] W[in, out] + b[out]
template <typename T>
Matrix<T> linear(const Matrix<T>& x, std::span<const T> w, std::span<const T> b, std::size_t out) {
  const std::size_t in = x.cols();
  Matrix<T> y(x.rows(), out);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto yr = y.row(r);
    for (std::size_t o = 0; o < out; ++o) yr[o] = b[o];
    for (std::size_t i = 0; i < in; ++i) {
      const T xi = x(r, i);
      const T* wrow = w.data() + i * out;
      for (std::size_t o = 0; o < out; ++o) yr[o] += xi * wrow[o];
    }
  }
  return y;
}

template <typename T>
Matrix<T> layer_norm(const Matrix<T>& x, std::span<const T> gamma, std::span<const T> beta,
                     Matrix<T>* hat_out, std::vector<T>* rstd_out) {
  const std::size_t n = x.cols();
  Matrix<T> y(x.rows(), n);
  Matrix<T> hat(x.rows(), n);
  std::vector<T> rstd(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    T mean = 0;
    for (std::size_t c = 0; c < n; ++c) mean += x(r, c);
    mean /= static_cast<T>(n);
    T var = 0;
    for (std::size_t c = 0; c < n; ++c) {
      const T d = x(r, c) - mean;
      var += d * d;
    }
    var /= static_cast<T>(n);
    rstd[r] = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    for (std::size_t c = 0; c < n; ++c) {
      hat(r, c) = (x(r, c) - mean) * rstd[r];
      y(r, c) = gamma[c] * hat(r, c) + beta[c];
    }
  }
  if (hat_out) *hat_out = std::move(hat);
  if (rstd_out) *rstd_out = std::move(rstd);
  return y;
}

}  // namespace lrp2::detail
