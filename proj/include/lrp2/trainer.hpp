#pragma once

// Synthetic multilingual fact world and a plain-SGD trainer with analytic
// backpropagation, so the probing pipeline has real signal at desk scale.

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lrp2/engine.hpp"
#include "lrp2/probing.hpp"
#include "lrp2/vocab.hpp"

namespace lrp2 {

struct Fact {
  std::string subject;
  std::string relation;
  std::string object;

  friend bool operator==(const Fact&, const Fact&) = default;
};

struct LanguageSpec {
  std::string id;
  double exposure = 1.0;  // fraction of facts realized in this language's corpus
  std::map<std::string, std::string> lexicon;    // entity -> surface form
  std::map<std::string, std::string> templates;  // relation -> template with [X], [Y]
};

struct FactWorldSpec {
  std::string name = "world";
  std::vector<std::string> entities;
  std::vector<std::string> relations;
  std::vector<Fact> facts;
  std::vector<LanguageSpec> languages;
  int sentences_per_fact = 1;

  std::size_t num_entities() const { return entities.size(); }
  std::size_t num_relations() const { return relations.size(); }

  // Throws SpecError on the first violated invariant.
  void validate() const;

  nlohmann::json to_json() const;
  static FactWorldSpec from_json(const nlohmann::json& j);
};

struct Sentence {
  std::string lang;
  std::string text;
  std::vector<TokenId> token_ids;  // words of `text`, without [BOS]
  std::vector<std::size_t> object_positions;  // indices into token_ids
  std::string uuid;
};

struct Corpus {
  Vocabulary vocab;
  std::map<std::string, std::vector<Sentence>> sentences;  // training text per language
  std::map<std::string, std::vector<Sentence>> parallel;   // every fact per language, fact order
  std::vector<ProbeQuery> probes;                          // every fact in every language
};

// Reference desk-scale world: two languages, four relations, forty facts.
// Entity surfaces are shared across languages; only templates differ, and
// each target template keeps the subject and object in the pivot order.
FactWorldSpec reference_world_spec(double pivot_exposure = 1.0, double target_exposure = 0.3);

Corpus generate_world(const FactWorldSpec& spec, std::uint64_t seed);

enum class Objective { masked_lm, causal_lm };

struct TrainConfig {
  int epochs = 1;
  int batch_size = 8;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
  Objective objective = Objective::masked_lm;
  double mask_fraction = 1.0;  // probability of masking each object token
  double max_grad_norm = 0.0;  // 0 disables clipping

  void validate() const;
  nlohmann::json to_json() const;
};

struct TrainingExample {
  std::vector<TokenId> tokens;                // model input including [BOS]
  std::vector<std::size_t> object_positions;  // indices into tokens
};

std::vector<TrainingExample> training_examples(const Corpus& corpus);

// One loss term: an input sequence plus (position, target token) pairs.
struct LossItem {
  std::vector<TokenId> input;
  std::vector<std::pair<std::size_t, TokenId>> targets;
};

// Mean token cross-entropy over every target of every item. When `grads` is
// non-null it receives d loss / d params (overwritten, not accumulated).
template <typename T>
double batch_loss(const BasicModel<T>& model, std::span<const LossItem> items, std::type_identity_t<Params<T>>* grads);

struct TrainReport {
  std::vector<double> epoch_losses;
  std::size_t steps = 0;
};

// Plain mini-batch SGD. epochs = 0 returns the input unchanged. A non-finite
// loss throws DivergenceError naming the step.
Model train(const Model& model, std::span<const TrainingExample> examples, const TrainConfig& config,
            TrainReport* report = nullptr);

// Masked LM: each object token is masked with probability mask_fraction, then
// random content positions are masked until ceil(0.15 * content length)
// positions (at least one) are masked. Causal LM: every position after [BOS]
// is a next-token target. Consumes `rng` only for masked LM.
LossItem make_loss_item(const TrainingExample& example, const TrainConfig& config, TokenId mask_id,
                        std::mt19937_64& rng);

}  // namespace lrp2
