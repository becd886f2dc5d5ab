#include "lrp2/neurons.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "lrp2/errors.hpp"
#include "lrp2/util.hpp"

namespace lrp2 {

void AttributionConfig::validate() const {
  if (riemann_steps < 1) throw ConfigError("riemann_steps must be >= 1");
  if (!(gradient_step > 0.0)) throw ConfigError("gradient_step must be > 0");
  if (k < 1) throw ConfigError("k must be >= 1");
}

double integrated_gradient(const std::function<double(double)>& F, double w, const AttributionConfig& cfg) {
  cfg.validate();
  if (w == 0.0) return 0.0;
  const double h = cfg.gradient_step * std::abs(w);
  const int m = cfg.riemann_steps;
  double sum = 0.0;
  for (int t = 1; t <= m; ++t) {
    const double a = static_cast<double>(t) / m * w;
    const double hi = F(a + h);
    const double lo = F(a - h);
    if (!std::isfinite(hi) || !std::isfinite(lo)) {
      throw NumericError("non-finite path value at step " + std::to_string(t));
    }
    sum += (hi - lo) / (2.0 * h);
  }
  return w * sum / m;
}

AttributionPrompt attribution_prompt(const ModelConfig& config, const Vocabulary& vocab,
                                     const ProbeQuery& query) {
  validate_query(query);
  const auto gold = vocab.encode(query.object);
  if (gold.empty()) throw InputError("query " + query.uuid + ": gold object tokenizes to zero tokens");
  AttributionPrompt prompt;
  if (config.mode == ModelMode::masked) {
    std::string masks;
    for (std::size_t k = 0; k < gold.size(); ++k) masks += (k ? " " : "") + std::string(kMaskToken);
    prompt.input = model_input(vocab, render(query.template_text, query.subject, masks));
    std::size_t k = 0;
    for (std::size_t p = 0; p < prompt.input.size(); ++p) {
      if (prompt.input[p] == config.mask_token_id) prompt.gold.emplace_back(p, gold[k++]);
    }
    prompt.position = prompt.gold.front().first;
  } else {
    const auto cut = query.template_text.find("[Y]");
    prompt.input = model_input(vocab, render(query.template_text.substr(0, cut) + "[Y]", query.subject, ""));
    const std::size_t first = prompt.input.size();
    for (std::size_t k = 0; k < gold.size(); ++k) {
      prompt.input.push_back(gold[k]);
      prompt.gold.emplace_back(first + k - 1, gold[k]);
    }
    prompt.position = first - 1;
  }
  if (prompt.input.size() > static_cast<std::size_t>(config.max_seq_len)) {
    throw InputError("query " + query.uuid + ": attribution prompt exceeds max_seq_len");
  }
  return prompt;
}

double gold_probability(const BasicTrace<double>& trace, const AttributionPrompt& prompt) {
  double sum = 0.0;
  for (const auto& [pos, tok] : prompt.gold) sum += token_logprobs(trace, pos)[static_cast<std::size_t>(tok)];
  return std::exp(sum / static_cast<double>(prompt.gold.size()));
}

namespace {

void check_coord(const ModelConfig& c, NeuronCoord coord) {
  if (coord.layer < 1 || coord.layer > c.num_layers || coord.index < 0 || coord.index >= c.ffn_dim) {
    throw InputError("neuron (" + std::to_string(coord.layer) + ", " + std::to_string(coord.index) +
                     ") outside the model");
  }
}

struct BaseRun {
  BasicTrace<double> trace;  // hooked, with FFN activations
};

BaseRun base_run(const Model64& model, const AttributionPrompt& prompt, Hooks64 hooks) {
  ForwardOptions<double> opts;
  opts.capture_ffn = true;
  return {forward(model, prompt.input, hooks, opts)};
}

double path_value(const Model64& model, const AttributionPrompt& prompt, const BaseRun& base, NeuronCoord coord,
                  double a, Hooks64 hooks) {
  ForwardOptions<double> opts;
  opts.patch = NeuronPatch<double>{coord.layer, coord.index, prompt.position, a};
  opts.resume_layer = coord.layer;
  opts.resume_hidden = &base.trace.hidden[static_cast<std::size_t>(coord.layer - 1)];
  return gold_probability(forward(model, prompt.input, hooks, opts), prompt);
}

double attribution_from_base(const Model64& model, const AttributionPrompt& prompt, const BaseRun& base,
                             NeuronCoord coord, const AttributionConfig& cfg, Hooks64 hooks) {
  const double w = base.trace.ffn_activations[static_cast<std::size_t>(coord.layer - 1)](
      prompt.position, static_cast<std::size_t>(coord.index));
  return integrated_gradient([&](double a) { return path_value(model, prompt, base, coord, a, hooks); }, w, cfg);
}

}  // namespace

double patched_gold_probability(const Model64& model, const AttributionPrompt& prompt, NeuronCoord coord,
                                double a, Hooks64 hooks) {
  check_coord(model.config(), coord);
  return path_value(model, prompt, base_run(model, prompt, hooks), coord, a, hooks);
}

double natural_activation(const Model64& model, const AttributionPrompt& prompt, NeuronCoord coord,
                          Hooks64 hooks) {
  check_coord(model.config(), coord);
  const auto base = base_run(model, prompt, hooks);
  return base.trace.ffn_activations[static_cast<std::size_t>(coord.layer - 1)](
      prompt.position, static_cast<std::size_t>(coord.index));
}

double neuron_attribution(const Model64& model, const AttributionPrompt& prompt, NeuronCoord coord,
                          const AttributionConfig& cfg, Hooks64 hooks) {
  check_coord(model.config(), coord);
  return attribution_from_base(model, prompt, base_run(model, prompt, hooks), coord, cfg, hooks);
}

std::vector<std::vector<double>> prompt_attributions(const Model64& model, const AttributionPrompt& prompt,
                                                     const AttributionConfig& cfg, Hooks64 hooks, int jobs) {
  cfg.validate();
  const auto& c = model.config();
  const auto base = base_run(model, prompt, hooks);
  const auto L = static_cast<std::size_t>(c.num_layers);
  const auto F = static_cast<std::size_t>(c.ffn_dim);
  std::vector<std::vector<double>> out(L, std::vector<double>(F, 0.0));
  parallel_for(L * F, jobs, [&](std::size_t s) {
    const NeuronCoord coord{static_cast<int>(s / F) + 1, static_cast<int>(s % F)};
    out[s / F][s % F] = attribution_from_base(model, prompt, base, coord, cfg, hooks);
  });
  return out;
}

namespace {

// Indices of the k largest values; ties by ascending index; result ascending.
template <typename V>
std::vector<int> top_k(const std::vector<V>& values, int k) {
  std::vector<int> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return values[static_cast<std::size_t>(a)] > values[static_cast<std::size_t>(b)];
  });
  order.resize(std::min(order.size(), static_cast<std::size_t>(std::max(k, 0))));
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace

LayerSets prompt_neurons(const std::vector<std::vector<double>>& attributions, int k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  LayerSets sets;
  for (const auto& layer : attributions) {
    for (double v : layer) {
      if (std::isnan(v)) throw NumericError("NaN attribution");
    }
    sets.push_back(top_k(layer, k));
  }
  return sets;
}

KnowledgeNeuronSet relation_neurons(const std::string& lang, const std::string& relation,
                                    const std::vector<LayerSets>& prompts, int k) {
  if (prompts.empty()) throw InputError("relation " + relation + ": no prompt-level neuron sets");
  if (k < 1) throw ConfigError("k must be >= 1");
  KnowledgeNeuronSet set{lang, relation, k, {}};
  const std::size_t layers = prompts.front().size();
  for (std::size_t l = 0; l < layers; ++l) {
    int width = 0;
    for (const auto& p : prompts) {
      if (p.size() != layers) throw InputError("prompt neuron sets disagree on layer count");
      for (int idx : p[l]) width = std::max(width, idx + 1);
    }
    std::vector<int> counts(static_cast<std::size_t>(width), 0);
    for (const auto& p : prompts)
      for (int idx : p[l]) ++counts[static_cast<std::size_t>(idx)];
    std::vector<int> chosen;
    for (int idx : top_k(counts, k)) {
      if (counts[static_cast<std::size_t>(idx)] > 0) chosen.push_back(idx);
    }
    set.per_layer[static_cast<int>(l) + 1] = chosen;
  }
  return set;
}

std::string to_string(OverlapFormula f) { return f == OverlapFormula::iou ? "iou" : "over_k"; }

OverlapFormula parse_overlap_formula(const std::string& s) {
  if (s == "iou") return OverlapFormula::iou;
  if (s == "over_k") return OverlapFormula::over_k;
  throw ConfigError("unknown overlap formula '" + s + "'");
}

namespace {

std::set<NeuronCoord> flatten(const KnowledgeNeuronSet& s, std::optional<int> layer) {
  std::set<NeuronCoord> out;
  for (const auto& [l, indices] : s.per_layer) {
    if (layer && l != *layer) continue;
    for (int idx : indices) out.insert({l, idx});
  }
  return out;
}

}  // namespace

double overlap_rate(const KnowledgeNeuronSet& a, const KnowledgeNeuronSet& b, std::optional<int> layer,
                    OverlapFormula formula) {
  const auto fa = flatten(a, layer);
  const auto fb = flatten(b, layer);
  std::size_t both = 0;
  for (const auto& c : fa) both += fb.count(c);
  double denom = 0.0;
  if (formula == OverlapFormula::iou) {
    denom = static_cast<double>(fa.size() + fb.size() - both);
  } else {
    std::set<int> layers;
    for (const auto* s : {&a, &b})
      for (const auto& [l, _] : s->per_layer)
        if (!layer || l == *layer) layers.insert(l);
    denom = static_cast<double>(a.k) * static_cast<double>(layers.size());
  }
  if (denom == 0.0) return 0.0;
  return 100.0 * static_cast<double>(both) / denom;
}

OverlapReport overlap_report(const std::map<std::string, KnowledgeNeuronSet>& a,
                             const std::map<std::string, KnowledgeNeuronSet>& b, int num_layers,
                             const std::string& config, OverlapFormula formula) {
  OverlapReport report;
  report.config = config;
  report.per_layer_same.assign(static_cast<std::size_t>(num_layers), 0.0);
  double same = 0.0;
  double diff = 0.0;
  int n_same = 0;
  int n_diff = 0;
  for (const auto& [ra, sa] : a) {
    for (const auto& [rb, sb] : b) {
      const double v = overlap_rate(sa, sb, std::nullopt, formula);
      if (ra == rb) {
        same += v;
        ++n_same;
        for (int l = 1; l <= num_layers; ++l) {
          report.per_layer_same[static_cast<std::size_t>(l - 1)] += overlap_rate(sa, sb, l, formula);
        }
      } else {
        diff += v;
        ++n_diff;
      }
    }
  }
  if (n_same > 0) {
    report.same = same / n_same;
    for (auto& v : report.per_layer_same) v /= n_same;
  } else {
    report.per_layer_same.clear();
  }
  if (n_diff > 0) report.different = diff / n_diff;
  if (n_same + n_diff > 0) report.avg = (same + diff) / (n_same + n_diff);
  return report;
}

}  // namespace lrp2
