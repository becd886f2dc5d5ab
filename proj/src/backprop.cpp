// Analytic gradients of the token cross-entropy through the whole engine.

#include <cmath>

#include "engine_internal.hpp"
#include "lrp2/errors.hpp"
#include "lrp2/trainer.hpp"

namespace lrp2 {

namespace {

using detail::ForwardCache;

// y = x W + b with W [in, out]. Accumulates dW, db; returns dx.
template <typename T>
Matrix<T> linear_backward(const Matrix<T>& x, const std::vector<T>& w, const Matrix<T>& dy,
                          std::vector<T>& dw, std::vector<T>& db) {
  const std::size_t in = x.cols();
  const std::size_t out = dy.cols();
  Matrix<T> dx(x.rows(), in);
  for (std::size_t s = 0; s < x.rows(); ++s) {
    for (std::size_t o = 0; o < out; ++o) db[o] += dy(s, o);
    for (std::size_t i = 0; i < in; ++i) {
      const T xi = x(s, i);
      const T* wrow = w.data() + i * out;
      T* dwrow = dw.data() + i * out;
      T acc = 0;
      for (std::size_t o = 0; o < out; ++o) {
        dwrow[o] += xi * dy(s, o);
        acc += dy(s, o) * wrow[o];
      }
      dx(s, i) = acc;
    }
  }
  return dx;
}

template <typename T>
Matrix<T> layer_norm_backward(const Matrix<T>& dy, const Matrix<T>& hat, const std::vector<T>& rstd,
                              const std::vector<T>& gamma, std::vector<T>& dgamma,
                              std::vector<T>& dbeta) {
  const std::size_t n = dy.cols();
  Matrix<T> dx(dy.rows(), n);
  std::vector<T> dhat(n);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    T mean_dhat = 0;
    T mean_dhat_hat = 0;
    for (std::size_t c = 0; c < n; ++c) {
      dgamma[c] += dy(r, c) * hat(r, c);
      dbeta[c] += dy(r, c);
      dhat[c] = dy(r, c) * gamma[c];
      mean_dhat += dhat[c];
      mean_dhat_hat += dhat[c] * hat(r, c);
    }
    mean_dhat /= static_cast<T>(n);
    mean_dhat_hat /= static_cast<T>(n);
    for (std::size_t c = 0; c < n; ++c) {
      dx(r, c) = rstd[r] * (dhat[c] - mean_dhat - hat(r, c) * mean_dhat_hat);
    }
  }
  return dx;
}

template <typename T>
void add_into(Matrix<T>& a, const Matrix<T>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

template <typename T>
void backward(const BasicModel<T>& model, std::span<const TokenId> tokens, const ForwardCache<T>& cache,
              const Matrix<T>& dlogits, Params<T>& grads) {
  const ModelConfig& cfg = model.config();
  const Params<T>& p = model.params();
  const auto n = static_cast<std::size_t>(cfg.hidden_dim);
  const auto heads = static_cast<std::size_t>(cfg.num_heads);
  const std::size_t dh = n / heads;
  const std::size_t seq = tokens.size();
  const auto vocab = static_cast<std::size_t>(cfg.vocab_size);
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  // Tied head.
  Matrix<T> dy(seq, n);
  for (std::size_t s = 0; s < seq; ++s) {
    for (std::size_t t = 0; t < vocab; ++t) {
      const T g = dlogits(s, t);
      if (g == T(0)) continue;
      grads.head_bias[t] += g;
      const T* e = p.token_embedding.data() + t * n;
      T* de = grads.token_embedding.data() + t * n;
      for (std::size_t c = 0; c < n; ++c) {
        dy(s, c) += g * e[c];
        de[c] += g * cache.final_out(s, c);
      }
    }
  }
  Matrix<T> dx = layer_norm_backward(dy, cache.final_hat, cache.final_rstd, p.final_gamma,
                                     grads.final_gamma, grads.final_beta);

  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const auto& lc = cache.layers[li];
    const LayerParams<T>& w = p.layers[li];
    LayerParams<T>& gw = grads.layers[li];

    // FFN branch.
    Matrix<T> dg = linear_backward(lc.g, w.w2, dx, gw.w2, gw.b2);
    for (std::size_t i = 0; i < dg.size(); ++i) dg.data()[i] *= detail::gelu_grad(lc.u.data()[i]);
    Matrix<T> db = linear_backward(lc.ln2_out, w.w1, dg, gw.w1, gw.b1);
    Matrix<T> dx_mid = dx;
    add_into(dx_mid, layer_norm_backward(db, lc.ln2_hat, lc.ln2_rstd, w.ln2_gamma, gw.ln2_gamma,
                                         gw.ln2_beta));

    // Attention branch.
    Matrix<T> dctx = linear_backward(lc.ctx, w.wo, dx_mid, gw.wo, gw.bo);
    Matrix<T> dq(seq, n), dk(seq, n), dv(seq, n);
    std::vector<T> dp(seq);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      const Matrix<T>& pr = lc.probs[h];
      for (std::size_t i = 0; i < seq; ++i) {
        T weighted = 0;
        for (std::size_t j = 0; j < seq; ++j) {
          T acc = 0;
          for (std::size_t d = 0; d < dh; ++d) {
            acc += dctx(i, off + d) * lc.v(j, off + d);
            dv(j, off + d) += pr(i, j) * dctx(i, off + d);
          }
          dp[j] = acc;
          weighted += pr(i, j) * acc;
        }
        for (std::size_t j = 0; j < seq; ++j) {
          const T ds = pr(i, j) * (dp[j] - weighted) * scale;
          if (ds == T(0)) continue;
          for (std::size_t d = 0; d < dh; ++d) {
            dq(i, off + d) += ds * lc.k(j, off + d);
            dk(j, off + d) += ds * lc.q(i, off + d);
          }
        }
      }
    }
    Matrix<T> da = linear_backward(lc.ln1_out, w.wq, dq, gw.wq, gw.bq);
    add_into(da, linear_backward(lc.ln1_out, w.wk, dk, gw.wk, gw.bk));
    add_into(da, linear_backward(lc.ln1_out, w.wv, dv, gw.wv, gw.bv));
    dx = std::move(dx_mid);
    add_into(dx, layer_norm_backward(da, lc.ln1_hat, lc.ln1_rstd, w.ln1_gamma, gw.ln1_gamma,
                                     gw.ln1_beta));
  }

  for (std::size_t s = 0; s < seq; ++s) {
    T* de = grads.token_embedding.data() + static_cast<std::size_t>(tokens[s]) * n;
    T* dpos = grads.position_embedding.data() + s * n;
    for (std::size_t c = 0; c < n; ++c) {
      de[c] += dx(s, c);
      dpos[c] += dx(s, c);
    }
  }
}

}  // namespace

template <typename T>
double batch_loss(const BasicModel<T>& model, std::span<const LossItem> items, std::type_identity_t<Params<T>>* grads) {
  if (grads) *grads = zero_params<T>(model.config());
  std::size_t total_targets = 0;
  for (const auto& item : items) total_targets += item.targets.size();
  if (total_targets == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(total_targets);
  const auto vocab = static_cast<std::size_t>(model.config().vocab_size);

  double loss = 0.0;
  for (const auto& item : items) {
    ForwardCache<T> cache;
    const auto trace = detail::forward_impl<T>(model, item.input, {}, {}, grads ? &cache : nullptr);
    Matrix<T> dlogits(item.input.size(), vocab);
    for (const auto& [pos, target] : item.targets) {
      const auto lp = token_logprobs(trace, pos);
      loss -= lp[static_cast<std::size_t>(target)] * inv;
      if (grads) {
        for (std::size_t v = 0; v < vocab; ++v) {
          const double onehot = v == static_cast<std::size_t>(target) ? 1.0 : 0.0;
          dlogits(pos, v) += static_cast<T>((std::exp(lp[v]) - onehot) * inv);
        }
      }
    }
    if (grads) backward(model, item.input, cache, dlogits, *grads);
  }
  return loss;
}

template double batch_loss(const BasicModel<float>&, std::span<const LossItem>, Params<float>*);
template double batch_loss(const BasicModel<double>&, std::span<const LossItem>, Params<double>*);

}  // namespace lrp2
