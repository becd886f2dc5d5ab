#pragma once

#include <map>
#include <string>
#include <vector>

#include "lrp2/engine.hpp"
#include "lrp2/langvec.hpp"
#include "lrp2/sweep.hpp"
#include "lrp2/trainer.hpp"

namespace lrp2::testing {

inline ModelConfig toy_model_config(const Corpus& corpus, int layers = 4, int hidden = 32, int ffn = 64) {
  ModelConfig c;
  c.num_layers = layers;
  c.hidden_dim = hidden;
  c.num_heads = 4;
  c.ffn_dim = ffn;
  c.vocab_size = static_cast<int>(corpus.vocab.size());
  c.max_seq_len = 16;
  c.mode = ModelMode::masked;
  return c;
}

// [BOS] + token ids of every parallel sentence of `lang`.
inline std::vector<std::vector<TokenId>> parallel_inputs(const Corpus& corpus, const std::string& lang) {
  std::vector<std::vector<TokenId>> inputs;
  for (const auto& s : corpus.parallel.at(lang)) {
    std::vector<TokenId> t{corpus.vocab.bos_id()};
    t.insert(t.end(), s.token_ids.begin(), s.token_ids.end());
    inputs.push_back(std::move(t));
  }
  return inputs;
}

struct ToySetup {
  std::map<std::string, LanguageVectorSet> vectors;
  SweepInputs inputs;
};

// Vectors from the parallel corpus; sweep inputs for target "xx" against "en".
// The returned inputs point into `setup.vectors`, `model` and `corpus`.
inline void build_toy_setup(ToySetup& setup, const Model& model, const Corpus& corpus) {
  for (const char* lang : {"en", "xx"}) {
    setup.vectors.insert_or_assign(lang, language_vectors(model, parallel_inputs(corpus, lang), lang));
  }
  SweepInputs& in = setup.inputs;
  in.model = &model;
  in.vocab = &corpus.vocab;
  in.lang = "xx";
  in.pivot = "en";
  in.lang_vectors = &setup.vectors.at("xx");
  in.pivot_vectors = &setup.vectors.at("en");
  in.queries.clear();
  in.pivot_queries.clear();
  for (const auto& q : corpus.probes) (q.lang == "xx" ? in.queries : in.pivot_queries).push_back(q);
}

}  // namespace lrp2::testing
