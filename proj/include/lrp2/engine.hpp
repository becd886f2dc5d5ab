#pragma once

// Minimal deterministic pre-LN transformer. Every layer output (the residual
// stream after the block's final residual addition) is exposed in the trace
// and can be rewritten by a hook before it reaches the next layer.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "lrp2/tensor.hpp"

namespace lrp2 {

using TokenId = std::int32_t;

enum class ModelMode { masked, causal };

std::string to_string(ModelMode mode);
ModelMode parse_mode(const std::string& text);

struct ModelConfig {
  int num_layers = 1;
  int hidden_dim = 8;
  int num_heads = 1;
  int ffn_dim = 16;
  int vocab_size = 16;
  int max_seq_len = 16;
  ModelMode mode = ModelMode::masked;
  TokenId pad_token_id = 0;
  TokenId mask_token_id = 1;
  TokenId bos_token_id = 2;

  // Throws ConfigError naming the first violated constraint.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename T>
struct LayerParams {
  std::vector<T> ln1_gamma, ln1_beta;
  std::vector<T> wq, bq, wk, bk, wv, bv, wo, bo;
  std::vector<T> ln2_gamma, ln2_beta;
  std::vector<T> w1, b1, w2, b2;

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

// Weight matrices are stored [fan_in, fan_out] row-major: y = x W + b.
// The output head is tied to token_embedding and only adds head_bias.
template <typename T>
struct Params {
  std::vector<T> token_embedding;     // [vocab, n]
  std::vector<T> position_embedding;  // [max_seq_len, n]
  std::vector<LayerParams<T>> layers;
  std::vector<T> final_gamma, final_beta;
  std::vector<T> head_bias;  // [vocab]

  friend bool operator==(const Params&, const Params&) = default;
};

struct TensorSpec {
  std::string name;
  std::vector<std::size_t> shape;

  std::size_t numel() const;
};

// Canonical tensor order used by the weight file and by every visitor.
std::vector<TensorSpec> tensor_manifest(const ModelConfig& config);

template <typename T>
std::vector<std::vector<T>*> tensor_slots(Params<T>& params);
template <typename T>
std::vector<const std::vector<T>*> tensor_slots(const Params<T>& params);

// All tensors sized for `config` and zero-filled.
template <typename T>
Params<T> zero_params(const ModelConfig& config);

template <typename T>
class BasicModel {
 public:
  // Throws ConfigError on an invalid config and IntegrityError when a tensor
  // has the wrong size or a non-finite entry.
  BasicModel(ModelConfig config, Params<T> params);

  const ModelConfig& config() const { return config_; }
  const Params<T>& params() const { return params_; }

  friend bool operator==(const BasicModel&, const BasicModel&) = default;

 private:
  ModelConfig config_;
  Params<T> params_;
};

using Model = BasicModel<float>;
using Model64 = BasicModel<double>;

template <typename To, typename From>
BasicModel<To> cast_model(const BasicModel<From>& model);

// Deterministic scaled-uniform init: matrices U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
// embeddings U(-0.5, 0.5), layer-norm gains 1, biases 0.
Model init_random(const ModelConfig& config, std::uint64_t seed);

template <typename T>
struct BasicHook {
  int layer = 1;  // 1-based; applied to that layer's output
  std::function<Matrix<T>(const Matrix<T>&)> transform;
};

using Hook = BasicHook<float>;

// Overrides one FFN-intermediate (post-GELU) activation during forward.
template <typename T>
struct NeuronPatch {
  int layer = 1;
  int index = 0;
  std::size_t position = 0;
  T value{};
};

template <typename T>
struct ForwardOptions {
  std::optional<NeuronPatch<T>> patch;
  bool capture_ffn = false;
  // When resume_layer = k > 1, resume_hidden must hold hidden[k-1] of an
  // earlier forward with the same tokens and hooks; layers < k are skipped.
  int resume_layer = 1;
  const Matrix<T>* resume_hidden = nullptr;
};

template <typename T>
struct BasicTrace {
  std::vector<Matrix<T>> hidden;           // L+1 entries, [seq, n]
  Matrix<T> logits;                        // [seq, vocab]
  std::vector<Matrix<T>> ffn_activations;  // L entries when captured, [seq, ffn]

  std::size_t seq_len() const { return logits.rows(); }
};

using LayerTrace = BasicTrace<float>;

template <typename T>
BasicTrace<T> forward(const BasicModel<T>& model, std::span<const TokenId> tokens,
                      std::type_identity_t<std::span<const BasicHook<T>>> hooks = {},
                      const std::type_identity_t<ForwardOptions<T>>& options = {});

// Log-softmax of the logits at `position`, computed in 64-bit.
template <typename T>
std::vector<double> token_logprobs(const BasicTrace<T>& trace, std::size_t position);

std::vector<double> log_softmax(std::span<const double> logits);

extern template class BasicModel<float>;
extern template class BasicModel<double>;

}  // namespace lrp2
