#pragma once

// Naive scoring oracles for cloze probing. They take logits from the engine's
// forward (already checked against the dense oracle) so the comparison
// isolates rendering, masking, log-softmax and aggregation.

#include <cmath>
#include <string>
#include <vector>

#include "lrp2/vocab.hpp"
#include "lrp2/engine.hpp"

namespace lrp2::testing {

using Vec = std::vector<double>;

inline std::vector<Vec> engine_logits(const Model& model, const std::vector<TokenId>& input) {
  const auto trace = forward(model, input);
  std::vector<Vec> rows(trace.logits.rows());
  for (std::size_t p = 0; p < rows.size(); ++p)
    for (std::size_t v = 0; v < trace.logits.cols(); ++v) rows[p].push_back(trace.logits(p, v));
  return rows;
}

inline Vec naive_log_softmax(const Vec& z) {
  double mx = z[0];
  for (double v : z) mx = std::max(mx, v);
  double s = 0.0;
  for (double v : z) s += std::exp(v - mx);
  Vec out;
  for (double v : z) out.push_back(v - mx - std::log(s));
  return out;
}

inline std::vector<TokenId> ids_of(const Vocabulary& vocab, const std::string& text) {
  std::vector<TokenId> ids{vocab.bos_id()};
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find(' ', start);
    if (end == std::string::npos) end = text.size();
    if (end > start) ids.push_back(*vocab.find(text.substr(start, end - start)));
    start = end + 1;
  }
  return ids;
}

inline std::string substitute(std::string tmpl, const std::string& key, const std::string& value) {
  const auto p = tmpl.find(key);
  return tmpl.replace(p, key.size(), value);
}

// Mean log-probability of the candidate tokens at the t mask slots.
inline double naive_masked_score(const Model& model, const Vocabulary& vocab, const std::string& tmpl,
                                 const std::string& subject, const std::string& candidate) {
  const auto cand = ids_of(vocab, candidate);  // leading [BOS] ignored below
  std::string masks;
  for (std::size_t k = 1; k < cand.size(); ++k) masks += (k > 1 ? " [MASK]" : "[MASK]");
  const auto input = ids_of(vocab, substitute(substitute(tmpl, "[X]", subject), "[Y]", masks));
  const auto logits = engine_logits(model, input);
  double sum = 0.0;
  std::size_t k = 1;
  for (std::size_t p = 0; p < input.size(); ++p) {
    if (input[p] != vocab.mask_id()) continue;
    sum += naive_log_softmax(logits[p])[static_cast<std::size_t>(cand[k++])];
  }
  return sum / static_cast<double>(cand.size() - 1);
}

// Chain-rule log-probability of the filled sentence after [BOS].
inline double naive_causal_score(const Model& model, const Vocabulary& vocab, const std::string& tmpl,
                                 const std::string& subject, const std::string& candidate) {
  const auto input = ids_of(vocab, substitute(substitute(tmpl, "[X]", subject), "[Y]", candidate));
  const auto logits = engine_logits(model, input);
  double sum = 0.0;
  for (std::size_t p = 1; p < input.size(); ++p) {
    sum += naive_log_softmax(logits[p - 1])[static_cast<std::size_t>(input[p])];
  }
  return sum;
}

}  // namespace lrp2::testing
