#pragma once

// Per-language, per-layer mean representation vectors.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lrp2/engine.hpp"

namespace lrp2 {

struct LanguageVectorSet {
  std::string lang;
  Matrix<float> vectors;  // [L, n]; row i-1 holds the layer-i vector
  int num_sentences = 0;

  int num_layers() const { return static_cast<int>(vectors.rows()); }
  int hidden_dim() const { return static_cast<int>(vectors.cols()); }
  std::span<const float> layer(int i) const { return vectors.row(static_cast<std::size_t>(i - 1)); }

  friend bool operator==(const LanguageVectorSet&, const LanguageVectorSet&) = default;
};

// Positions pooled for sentence vectors: every position except [PAD] and [BOS].
std::vector<std::size_t> content_positions(std::span<const TokenId> input, const ModelConfig& config);

// 64-bit mean of hidden[layer] rows at `positions`. Layer 0 (embeddings) is
// accepted for geometry curves.
template <typename T>
std::vector<double> sentence_vector(const BasicTrace<T>& trace, int layer,
                                    std::span<const std::size_t> positions);

// Averages hookless sentence vectors over `inputs` (each already prefixed with
// [BOS]) at every layer 1..L.
LanguageVectorSet language_vectors(const Model& model, const std::vector<std::vector<TokenId>>& inputs,
                                   const std::string& lang, int jobs = 1);

// Writes `path` (LRPW, tensor "langvec/<lang>") and the sidecar
// `path` with extension ".json": {"lang", "num_sentences"}. A non-null `meta`
// is stored in both.
void save_language_vectors(const std::filesystem::path& path, const LanguageVectorSet& set,
                           const nlohmann::json& meta = nullptr);
LanguageVectorSet load_language_vectors(const std::filesystem::path& path);

}  // namespace lrp2
