#pragma once

// Integrated-gradient attribution of FFN-intermediate neurons, per-layer
// top-k knowledge-neuron sets and their cross-lingual overlap.

#include <compare>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lrp2/engine.hpp"
#include "lrp2/probing.hpp"
#include "lrp2/vocab.hpp"

namespace lrp2 {

struct NeuronCoord {
  int layer = 1;  // 1-based
  int index = 0;  // FFN-intermediate unit

  friend auto operator<=>(const NeuronCoord&, const NeuronCoord&) = default;
};

struct AttributionConfig {
  int riemann_steps = 20;
  double gradient_step = 1e-3;
  int k = 20;

  void validate() const;  // ConfigError
};

// w * (1/m) * sum_{t=1..m} F'(t/m * w), with F' by central differences of
// step gradient_step * |w|. Zero when w = 0. Non-finite F throws NumericError.
double integrated_gradient(const std::function<double(double)>& F, double w, const AttributionConfig& cfg);

// The scored input, the position whose activation is patched, and the
// (logit position, gold token) terms of F.
struct AttributionPrompt {
  std::vector<TokenId> input;
  std::size_t position = 0;
  std::vector<std::pair<std::size_t, TokenId>> gold;
};

// Masked: template with t masks, patched at the first mask. Causal: [BOS] +
// text before "[Y]" + gold tokens, patched where the first gold token is
// predicted.
AttributionPrompt attribution_prompt(const ModelConfig& config, const Vocabulary& vocab,
                                     const ProbeQuery& query);

// exp(mean gold log-probability); a single-token gold gives its probability.
double gold_probability(const BasicTrace<double>& trace, const AttributionPrompt& prompt);

using Hooks64 = std::span<const BasicHook<double>>;

double neuron_attribution(const Model64& model, const AttributionPrompt& prompt, NeuronCoord coord,
                          const AttributionConfig& cfg, Hooks64 hooks = {});

// F at activation value `a` for one coord (the path function above).
double patched_gold_probability(const Model64& model, const AttributionPrompt& prompt, NeuronCoord coord,
                                double a, Hooks64 hooks = {});

// Natural (unpatched, hooked) activation at the coord.
double natural_activation(const Model64& model, const AttributionPrompt& prompt, NeuronCoord coord,
                          Hooks64 hooks = {});

// attributions[l-1][index] for every coord of the model.
std::vector<std::vector<double>> prompt_attributions(const Model64& model, const AttributionPrompt& prompt,
                                                     const AttributionConfig& cfg, Hooks64 hooks = {},
                                                     int jobs = 1);

// Per layer (index l-1): ascending indices of the top-k scores; ties by index.
using LayerSets = std::vector<std::vector<int>>;

LayerSets prompt_neurons(const std::vector<std::vector<double>>& attributions, int k);

struct KnowledgeNeuronSet {
  std::string lang;
  std::string relation;
  int k = 20;
  std::map<int, std::vector<int>> per_layer;  // layer -> ascending indices

  friend bool operator==(const KnowledgeNeuronSet&, const KnowledgeNeuronSet&) = default;
};

// Per layer, the k coords occurring in the most prompt sets; ties by index.
KnowledgeNeuronSet relation_neurons(const std::string& lang, const std::string& relation,
                                    const std::vector<LayerSets>& prompts, int k);

enum class OverlapFormula { iou, over_k };
std::string to_string(OverlapFormula f);
OverlapFormula parse_overlap_formula(const std::string& s);

// Percent overlap of the coord sets, pooled over layers or restricted to one
// layer. iou: |A∩B| / |A∪B|; over_k: |A∩B| / (k * layers in scope). Empty
// denominators give 0.
double overlap_rate(const KnowledgeNeuronSet& a, const KnowledgeNeuronSet& b,
                    std::optional<int> layer = std::nullopt, OverlapFormula formula = OverlapFormula::iou);

struct OverlapReport {
  std::string config;
  std::optional<double> same;       // matched relations
  std::optional<double> different;  // ordered unmatched relation pairs
  std::optional<double> avg;        // all pairs
  std::vector<double> per_layer_same;  // index l-1, mean over matched relations

  friend bool operator==(const OverlapReport&, const OverlapReport&) = default;
};

OverlapReport overlap_report(const std::map<std::string, KnowledgeNeuronSet>& a,
                             const std::map<std::string, KnowledgeNeuronSet>& b, int num_layers,
                             const std::string& config, OverlapFormula formula = OverlapFormula::iou);

}  // namespace lrp2
