#include "lrp2/geometry.hpp"

#include <cmath>
#include <map>

#include "lrp2/errors.hpp"
#include "lrp2/langvec.hpp"
#include "lrp2/util.hpp"

namespace lrp2 {

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InputError("cosine of vectors with different lengths");
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0.0 || nb == 0.0) throw NumericError("cosine of a zero-norm vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<double> layerwise_cosine(const Model& model, const std::vector<SentencePair>& pairs,
                                     std::span<const Hook> hooks_a, std::span<const Hook> hooks_b,
                                     int jobs) {
  if (pairs.empty()) throw InputError("layer-wise cosine needs at least one sentence pair");
  const auto& cfg = model.config();
  const auto layers = static_cast<std::size_t>(cfg.num_layers) + 1;
  std::vector<std::vector<double>> per_pair(pairs.size());
  parallel_for(pairs.size(), jobs, [&](std::size_t p) {
    const auto& [a, b] = pairs[p];
    const auto pos_a = content_positions(a, cfg);
    const auto pos_b = content_positions(b, cfg);
    const auto ta = forward(model, a, hooks_a);
    const auto tb = forward(model, b, hooks_b);
    auto& out = per_pair[p];
    for (std::size_t k = 0; k < layers; ++k) {
      const auto va = sentence_vector(ta, static_cast<int>(k), pos_a);
      const auto vb = sentence_vector(tb, static_cast<int>(k), pos_b);
      try {
        out.push_back(cosine(va, vb));
      } catch (const NumericError&) {
        throw NumericError("zero-norm sentence vector at layer " + std::to_string(k) + ", pair " +
                           std::to_string(p));
      }
    }
  });
  std::vector<double> curve(layers, 0.0);
  for (std::size_t k = 0; k < layers; ++k) {
    for (const auto& v : per_pair) curve[k] += v[k];
    curve[k] /= static_cast<double>(pairs.size());
  }
  return curve;
}

std::vector<SentencePair> parallel_query_pairs(const Vocabulary& vocab, const std::vector<ProbeQuery>& a,
                                               const std::vector<ProbeQuery>& b) {
  std::map<std::string, const ProbeQuery*> by_uuid;
  for (const auto& q : b) by_uuid.emplace(q.uuid, &q);
  std::vector<SentencePair> pairs;
  for (const auto& q : a) {
    const auto it = by_uuid.find(q.uuid);
    if (it == by_uuid.end()) continue;
    pairs.emplace_back(model_input(vocab, render(q.template_text, q.subject, "")),
                       model_input(vocab, render(it->second->template_text, it->second->subject, "")));
  }
  return pairs;
}

}  // namespace lrp2
