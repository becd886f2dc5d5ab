#include "lrp2/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "engine_internal.hpp"
#include "lrp2/errors.hpp"

namespace lrp2 {

std::string to_string(ModelMode mode) { return mode == ModelMode::masked ? "masked" : "causal"; }

ModelMode parse_mode(const std::string& text) {
  if (text == "masked") return ModelMode::masked;
  if (text == "causal") return ModelMode::causal;
  throw ConfigError("unknown model mode '" + text + "' (expected masked|causal)");
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid model config: " + what);
  };
  require(num_layers >= 1, "num_layers must be >= 1");
  require(hidden_dim >= 1, "hidden_dim must be >= 1");
  require(num_heads >= 1, "num_heads must be >= 1");
  require(hidden_dim % num_heads == 0, "hidden_dim (" + std::to_string(hidden_dim) +
                                           ") must be divisible by num_heads (" +
                                           std::to_string(num_heads) + ")");
  require(ffn_dim >= 1, "ffn_dim must be >= 1");
  require(vocab_size >= 1, "vocab_size must be >= 1");
  require(max_seq_len >= 1, "max_seq_len must be >= 1");
  for (auto [name, id] : {std::pair{"pad_token_id", pad_token_id},
                          std::pair{"mask_token_id", mask_token_id},
                          std::pair{"bos_token_id", bos_token_id}}) {
    require(id >= 0 && id < vocab_size, std::string(name) + " out of vocabulary range");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"num_layers", num_layers},   {"hidden_dim", hidden_dim},
          {"num_heads", num_heads},     {"ffn_dim", ffn_dim},
          {"vocab_size", vocab_size},   {"max_seq_len", max_seq_len},
          {"mode", to_string(mode)},    {"pad_token_id", pad_token_id},
          {"mask_token_id", mask_token_id}, {"bos_token_id", bos_token_id}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.num_layers = j.at("num_layers").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.num_heads = j.at("num_heads").get<int>();
    c.ffn_dim = j.at("ffn_dim").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_seq_len = j.at("max_seq_len").get<int>();
    c.mode = parse_mode(j.at("mode").get<std::string>());
    c.pad_token_id = j.at("pad_token_id").get<TokenId>();
    c.mask_token_id = j.at("mask_token_id").get<TokenId>();
    c.bos_token_id = j.at("bos_token_id").get<TokenId>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
  return c;
}

std::size_t TensorSpec::numel() const {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::vector<TensorSpec> tensor_manifest(const ModelConfig& config) {
  const auto n = static_cast<std::size_t>(config.hidden_dim);
  const auto f = static_cast<std::size_t>(config.ffn_dim);
  const auto v = static_cast<std::size_t>(config.vocab_size);
  std::vector<TensorSpec> specs;
  specs.push_back({"token_embedding", {v, n}});
  specs.push_back({"position_embedding", {static_cast<std::size_t>(config.max_seq_len), n}});
  for (int l = 1; l <= config.num_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    specs.push_back({p + "ln1.gamma", {n}});
    specs.push_back({p + "ln1.beta", {n}});
    specs.push_back({p + "attn.wq", {n, n}});
    specs.push_back({p + "attn.bq", {n}});
    specs.push_back({p + "attn.wk", {n, n}});
    specs.push_back({p + "attn.bk", {n}});
    specs.push_back({p + "attn.wv", {n, n}});
    specs.push_back({p + "attn.bv", {n}});
    specs.push_back({p + "attn.wo", {n, n}});
    specs.push_back({p + "attn.bo", {n}});
    specs.push_back({p + "ln2.gamma", {n}});
    specs.push_back({p + "ln2.beta", {n}});
    specs.push_back({p + "ffn.w1", {n, f}});
    specs.push_back({p + "ffn.b1", {f}});
    specs.push_back({p + "ffn.w2", {f, n}});
    specs.push_back({p + "ffn.b2", {n}});
  }
  specs.push_back({"final_ln.gamma", {n}});
  specs.push_back({"final_ln.beta", {n}});
  specs.push_back({"head.bias", {v}});
  return specs;
}

namespace {

template <typename P, typename V>
std::vector<V*> collect_slots(P& params) {
  std::vector<V*> out{&params.token_embedding, &params.position_embedding};
  for (auto& l : params.layers) {
    for (V* t : {&l.ln1_gamma, &l.ln1_beta, &l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo,
                 &l.ln2_gamma, &l.ln2_beta, &l.w1, &l.b1, &l.w2, &l.b2}) {
      out.push_back(t);
    }
  }
  out.push_back(&params.final_gamma);
  out.push_back(&params.final_beta);
  out.push_back(&params.head_bias);
  return out;
}

}  // namespace

template <typename T>
std::vector<std::vector<T>*> tensor_slots(Params<T>& params) {
  return collect_slots<Params<T>, std::vector<T>>(params);
}

template <typename T>
std::vector<const std::vector<T>*> tensor_slots(const Params<T>& params) {
  return collect_slots<const Params<T>, const std::vector<T>>(params);
}

template <typename T>
Params<T> zero_params(const ModelConfig& config) {
  config.validate();
  Params<T> p;
  p.layers.resize(static_cast<std::size_t>(config.num_layers));
  const auto specs = tensor_manifest(config);
  const auto slots = tensor_slots(p);
  for (std::size_t i = 0; i < specs.size(); ++i) slots[i]->assign(specs[i].numel(), T{0});
  return p;
}

template <typename T>
BasicModel<T>::BasicModel(ModelConfig config, Params<T> params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  if (params_.layers.size() != static_cast<std::size_t>(config_.num_layers)) {
    throw IntegrityError("model has " + std::to_string(params_.layers.size()) +
                         " layers but config declares " + std::to_string(config_.num_layers));
  }
  const auto specs = tensor_manifest(config_);
  const auto slots = tensor_slots(std::as_const(params_));
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (slots[i]->size() != specs[i].numel()) {
      throw IntegrityError("tensor " + specs[i].name + " has " + std::to_string(slots[i]->size()) +
                           " entries, expected " + std::to_string(specs[i].numel()));
    }
    for (T x : *slots[i]) {
      if (!std::isfinite(x)) throw IntegrityError("tensor " + specs[i].name + " has a non-finite entry");
    }
  }
}

template <typename To, typename From>
BasicModel<To> cast_model(const BasicModel<From>& model) {
  Params<To> out = zero_params<To>(model.config());
  const auto src = tensor_slots(model.params());
  const auto dst = tensor_slots(out);
  for (std::size_t i = 0; i < src.size(); ++i) {
    std::transform(src[i]->begin(), src[i]->end(), dst[i]->begin(),
                   [](From x) { return static_cast<To>(x); });
  }
  return BasicModel<To>(model.config(), std::move(out));
}

Model init_random(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Params<float> p = zero_params<float>(config);
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double bound) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return static_cast<float>(bound * (2.0 * u - 1.0));
  };
  const auto specs = tensor_manifest(config);
  const auto slots = tensor_slots(p);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& name = specs[i].name;
    auto& t = *slots[i];
    const bool is_gain = name.ends_with(".gamma");
    const bool is_bias = name.ends_with(".beta") || name.ends_with(".bias") ||
                         name.ends_with(".bq") || name.ends_with(".bk") || name.ends_with(".bv") ||
                         name.ends_with(".bo") || name.ends_with(".b1") || name.ends_with(".b2");
    if (is_gain) {
      std::fill(t.begin(), t.end(), 1.0f);
    } else if (is_bias) {
      std::fill(t.begin(), t.end(), 0.0f);
    } else if (specs[i].shape.size() == 2 && name.find("embedding") == std::string::npos) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(specs[i].shape[0]));
      for (auto& x : t) x = uniform(bound);
    } else {
      for (auto& x : t) x = uniform(0.5);
    }
  }
  return Model(config, std::move(p));
}

namespace detail {

template <typename T>
BasicTrace<T> forward_impl(const BasicModel<T>& model, std::span<const TokenId> tokens,
                           std::span<const BasicHook<T>> hooks, const ForwardOptions<T>& options,
                           ForwardCache<T>* cache) {
  const ModelConfig& cfg = model.config();
  const Params<T>& p = model.params();
  const auto n = static_cast<std::size_t>(cfg.hidden_dim);
  const auto f = static_cast<std::size_t>(cfg.ffn_dim);
  const auto heads = static_cast<std::size_t>(cfg.num_heads);
  const std::size_t dh = n / heads;
  const std::size_t seq = tokens.size();
  const auto num_layers = static_cast<std::size_t>(cfg.num_layers);

  if (seq == 0) throw InputError("empty token sequence");
  if (seq > static_cast<std::size_t>(cfg.max_seq_len)) {
    throw InputError("sequence length " + std::to_string(seq) + " exceeds max_seq_len " +
                     std::to_string(cfg.max_seq_len));
  }
  for (TokenId t : tokens) {
    if (t < 0 || t >= cfg.vocab_size) throw InputError("token id " + std::to_string(t) + " out of range");
  }
  std::vector<const BasicHook<T>*> hook_at(num_layers + 1, nullptr);
  for (const auto& h : hooks) {
    if (h.layer < 1 || h.layer > cfg.num_layers) {
      throw InputError("hook layer " + std::to_string(h.layer) + " outside [1, " +
                       std::to_string(cfg.num_layers) + "]");
    }
    if (hook_at[static_cast<std::size_t>(h.layer)]) {
      throw InputError("more than one hook at layer " + std::to_string(h.layer));
    }
    hook_at[static_cast<std::size_t>(h.layer)] = &h;
  }
  if (options.patch) {
    const auto& pt = *options.patch;
    if (pt.layer < 1 || pt.layer > cfg.num_layers || pt.index < 0 || pt.index >= cfg.ffn_dim ||
        pt.position >= seq) {
      throw InputError("neuron patch out of bounds");
    }
  }
  const int start = options.resume_layer;
  if (start < 1 || start > cfg.num_layers) throw InputError("resume layer out of range");
  if (start > 1 && (!options.resume_hidden || options.resume_hidden->rows() != seq ||
                    options.resume_hidden->cols() != n)) {
    throw InputError("resume requires hidden state of shape [seq, n]");
  }

  BasicTrace<T> trace;
  trace.hidden.resize(num_layers + 1);
  if (options.capture_ffn) trace.ffn_activations.resize(num_layers);
  if (cache) cache->layers.resize(num_layers);

  if (start == 1) {
    Matrix<T> x0(seq, n);
    for (std::size_t s = 0; s < seq; ++s) {
      const T* te = p.token_embedding.data() + static_cast<std::size_t>(tokens[s]) * n;
      const T* pe = p.position_embedding.data() + s * n;
      for (std::size_t c = 0; c < n; ++c) x0(s, c) = te[c] + pe[c];
    }
    trace.hidden[0] = std::move(x0);
  } else {
    trace.hidden[static_cast<std::size_t>(start - 1)] = *options.resume_hidden;
  }

  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const bool causal = cfg.mode == ModelMode::causal;

  for (std::size_t li = static_cast<std::size_t>(start) - 1; li < num_layers; ++li) {
    const LayerParams<T>& w = p.layers[li];
    const Matrix<T>& x = trace.hidden[li];

    Matrix<T> ln1_hat;
    std::vector<T> ln1_rstd;
    Matrix<T> a = layer_norm<T>(x, w.ln1_gamma, w.ln1_beta, &ln1_hat, &ln1_rstd);
    Matrix<T> q = linear<T>(a, w.wq, w.bq, n);
    Matrix<T> k = linear<T>(a, w.wk, w.bk, n);
    Matrix<T> v = linear<T>(a, w.wv, w.bv, n);

    Matrix<T> ctx(seq, n);
    std::vector<Matrix<T>> probs;
    if (cache) probs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      Matrix<T> pr(seq, seq);
      for (std::size_t i = 0; i < seq; ++i) {
        const std::size_t visible = causal ? i + 1 : seq;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < visible; ++j) {
          T dot = 0;
          for (std::size_t d = 0; d < dh; ++d) dot += q(i, off + d) * k(j, off + d);
          pr(i, j) = dot * scale;
          mx = std::max(mx, pr(i, j));
        }
        T denom = 0;
        for (std::size_t j = 0; j < visible; ++j) {
          pr(i, j) = std::exp(pr(i, j) - mx);
          denom += pr(i, j);
        }
        for (std::size_t j = 0; j < visible; ++j) pr(i, j) /= denom;
        for (std::size_t j = 0; j < visible; ++j) {
          const T pij = pr(i, j);
          for (std::size_t d = 0; d < dh; ++d) ctx(i, off + d) += pij * v(j, off + d);
        }
      }
      if (cache) probs.push_back(std::move(pr));
    }

    Matrix<T> o = linear<T>(ctx, w.wo, w.bo, n);
    Matrix<T> x_mid = x;
    for (std::size_t i = 0; i < x_mid.size(); ++i) x_mid.data()[i] += o.data()[i];

    Matrix<T> ln2_hat;
    std::vector<T> ln2_rstd;
    Matrix<T> b = layer_norm<T>(x_mid, w.ln2_gamma, w.ln2_beta, &ln2_hat, &ln2_rstd);
    Matrix<T> u = linear<T>(b, w.w1, w.b1, f);
    Matrix<T> g(seq, f);
    for (std::size_t i = 0; i < u.size(); ++i) g.data()[i] = gelu(u.data()[i]);
    if (options.patch && static_cast<std::size_t>(options.patch->layer) == li + 1) {
      g(options.patch->position, static_cast<std::size_t>(options.patch->index)) = options.patch->value;
    }
    Matrix<T> ffn_out = linear<T>(g, w.w2, w.b2, n);
    Matrix<T> x_out = x_mid;
    for (std::size_t i = 0; i < x_out.size(); ++i) x_out.data()[i] += ffn_out.data()[i];

    if (options.capture_ffn) trace.ffn_activations[li] = g;

    if (cache) {
      auto& lc = cache->layers[li];
      lc.x_in = x;
      lc.ln1_hat = std::move(ln1_hat);
      lc.ln1_out = std::move(a);
      lc.ln1_rstd = std::move(ln1_rstd);
      lc.q = std::move(q);
      lc.k = std::move(k);
      lc.v = std::move(v);
      lc.probs = std::move(probs);
      lc.ctx = std::move(ctx);
      lc.x_mid = std::move(x_mid);
      lc.ln2_hat = std::move(ln2_hat);
      lc.ln2_out = std::move(b);
      lc.ln2_rstd = std::move(ln2_rstd);
      lc.u = std::move(u);
      lc.g = std::move(g);
    }

    if (const auto* hook = hook_at[li + 1]) {
      Matrix<T> shifted = hook->transform(x_out);
      if (shifted.rows() != x_out.rows() || shifted.cols() != x_out.cols()) {
        throw InputError("hook at layer " + std::to_string(li + 1) + " changed the hidden-state shape");
      }
      x_out = std::move(shifted);
    }
    trace.hidden[li + 1] = std::move(x_out);
  }

  Matrix<T> final_hat;
  std::vector<T> final_rstd;
  Matrix<T> y = layer_norm<T>(trace.hidden[num_layers], p.final_gamma, p.final_beta, &final_hat,
                              &final_rstd);
  const auto vocab = static_cast<std::size_t>(cfg.vocab_size);
  Matrix<T> logits(seq, vocab);
  for (std::size_t s = 0; s < seq; ++s) {
    for (std::size_t t = 0; t < vocab; ++t) {
      const T* e = p.token_embedding.data() + t * n;
      T acc = p.head_bias[t];
      for (std::size_t c = 0; c < n; ++c) acc += y(s, c) * e[c];
      logits(s, t) = acc;
    }
  }
  trace.logits = std::move(logits);
  if (cache) {
    cache->final_hat = std::move(final_hat);
    cache->final_out = std::move(y);
    cache->final_rstd = std::move(final_rstd);
  }
  return trace;
}

template BasicTrace<float> forward_impl(const BasicModel<float>&, std::span<const TokenId>,
                                        std::span<const BasicHook<float>>,
                                        const ForwardOptions<float>&, ForwardCache<float>*);
template BasicTrace<double> forward_impl(const BasicModel<double>&, std::span<const TokenId>,
                                         std::span<const BasicHook<double>>,
                                         const ForwardOptions<double>&, ForwardCache<double>*);

}  // namespace detail

template <typename T>
BasicTrace<T> forward(const BasicModel<T>& model, std::span<const TokenId> tokens,
                      std::type_identity_t<std::span<const BasicHook<T>>> hooks,
                      const std::type_identity_t<ForwardOptions<T>>& options) {
  return detail::forward_impl<T>(model, tokens, hooks, options, nullptr);
}

std::vector<double> log_softmax(std::span<const double> logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : logits) mx = std::max(mx, x);
  double sum = 0.0;
  for (double x : logits) sum += std::exp(x - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

template <typename T>
std::vector<double> token_logprobs(const BasicTrace<T>& trace, std::size_t position) {
  if (position >= trace.logits.rows()) {
    throw InputError("position " + std::to_string(position) + " outside sequence of length " +
                     std::to_string(trace.logits.rows()));
  }
  const auto row = trace.logits.row(position);
  std::vector<double> wide(row.begin(), row.end());
  return log_softmax(wide);
}

template class BasicModel<float>;
template class BasicModel<double>;

template std::vector<std::vector<float>*> tensor_slots(Params<float>&);
template std::vector<std::vector<double>*> tensor_slots(Params<double>&);
template std::vector<const std::vector<float>*> tensor_slots(const Params<float>&);
template std::vector<const std::vector<double>*> tensor_slots(const Params<double>&);
template Params<float> zero_params(const ModelConfig&);
template Params<double> zero_params(const ModelConfig&);
template BasicModel<double> cast_model(const BasicModel<float>&);
template BasicModel<float> cast_model(const BasicModel<double>&);
template BasicModel<float> cast_model(const BasicModel<float>&);
template BasicModel<double> cast_model(const BasicModel<double>&);
template BasicTrace<float> forward(const BasicModel<float>&, std::span<const TokenId>,
                                   std::span<const BasicHook<float>>, const ForwardOptions<float>&);
template BasicTrace<double> forward(const BasicModel<double>&, std::span<const TokenId>,
                                    std::span<const BasicHook<double>>,
                                    const ForwardOptions<double>&);
template std::vector<double> token_logprobs(const BasicTrace<float>&, std::size_t);
template std::vector<double> token_logprobs(const BasicTrace<double>&, std::size_t);

}  // namespace lrp2
