#pragma once

// Layer-wise cosine similarity between uuid-parallel sentence representations.

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lrp2/engine.hpp"
#include "lrp2/probing.hpp"
#include "lrp2/vocab.hpp"

namespace lrp2 {

struct SpaceDistanceCurve {
  std::string lang_a;
  std::string lang_b;
  std::string config;          // "baseline" or "i-j"
  std::vector<double> values;  // L+1 entries, index 0 = embeddings

  friend bool operator==(const SpaceDistanceCurve&, const SpaceDistanceCurve&) = default;
};

using SentencePair = std::pair<std::vector<TokenId>, std::vector<TokenId>>;

// Zero norm throws NumericError.
double cosine(std::span<const double> a, std::span<const double> b);

// Mean over pairs of cosine(sentence_vector_a(k), sentence_vector_b(k)) for
// every layer k in 0..L. Side a runs with hooks_a, side b with hooks_b.
// A zero-norm vector throws NumericError naming the layer and pair.
std::vector<double> layerwise_cosine(const Model& model, const std::vector<SentencePair>& pairs,
                                     std::span<const Hook> hooks_a, std::span<const Hook> hooks_b,
                                     int jobs = 1);

// Model inputs for uuid-matched queries with the "[Y]" placeholder removed.
// Queries present in only one language are skipped.
std::vector<SentencePair> parallel_query_pairs(const Vocabulary& vocab, const std::vector<ProbeQuery>& a,
                                               const std::vector<ProbeQuery>& b);

}  // namespace lrp2
