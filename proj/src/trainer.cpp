#include "lrp2/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "lrp2/errors.hpp"

namespace lrp2 {

namespace {

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Fisher-Yates with an explicit index draw so results do not depend on the
// standard library's shuffle implementation.
template <typename V>
void shuffle_in_place(V& values, std::mt19937_64& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(values[i - 1], values[j]);
  }
}

std::size_t count_occurrences(const std::string& text, const std::string& needle) {
  std::size_t count = 0;
  for (std::size_t pos = text.find(needle); pos != std::string::npos;
       pos = text.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

}  // namespace

void FactWorldSpec::validate() const {
  if (facts.empty()) throw SpecError("fact world '" + name + "' has an empty fact list");
  if (languages.empty()) throw SpecError("fact world declares no languages");
  if (sentences_per_fact < 1) throw SpecError("sentences_per_fact must be >= 1");
  const std::set<std::string> entity_set(entities.begin(), entities.end());
  const std::set<std::string> relation_set(relations.begin(), relations.end());
  if (entity_set.size() != entities.size()) throw SpecError("duplicate entity names");
  if (relation_set.size() != relations.size()) throw SpecError("duplicate relation ids");

  std::map<std::pair<std::string, std::string>, std::string> objects;
  for (std::size_t i = 0; i < facts.size(); ++i) {
    const auto& f = facts[i];
    const std::string where = "fact #" + std::to_string(i);
    if (!entity_set.contains(f.subject)) throw SpecError(where + ": unknown subject '" + f.subject + "'");
    if (!entity_set.contains(f.object)) throw SpecError(where + ": unknown object '" + f.object + "'");
    if (!relation_set.contains(f.relation)) {
      throw SpecError(where + ": unknown relation '" + f.relation + "'");
    }
    auto [it, inserted] = objects.emplace(std::pair{f.subject, f.relation}, f.object);
    if (!inserted) {
      throw SpecError(where + ": (" + f.subject + ", " + f.relation + ") already has object '" +
                      it->second + "'");
    }
  }

  std::set<std::string> lang_ids;
  for (const auto& lang : languages) {
    if (lang.id.empty() || !lang_ids.insert(lang.id).second) {
      throw SpecError("language ids must be non-empty and distinct");
    }
    if (!(lang.exposure >= 0.0 && lang.exposure <= 1.0)) {
      throw SpecError("language " + lang.id + ": exposure outside [0, 1]");
    }
    for (const auto& e : entities) {
      auto it = lang.lexicon.find(e);
      if (it == lang.lexicon.end() || split_words(it->second).empty()) {
        throw SpecError("language " + lang.id + ": no surface form for entity '" + e + "'");
      }
    }
    for (const auto& r : relations) {
      auto it = lang.templates.find(r);
      if (it == lang.templates.end()) {
        throw SpecError("language " + lang.id + ": no template for relation '" + r + "'");
      }
      if (count_occurrences(it->second, "[X]") != 1 || count_occurrences(it->second, "[Y]") != 1) {
        throw SpecError("language " + lang.id + ": template for " + r +
                        " must hold exactly one [X] and one [Y]");
      }
    }
  }
}

nlohmann::json FactWorldSpec::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["entities"] = entities;
  j["relations"] = relations;
  j["sentences_per_fact"] = sentences_per_fact;
  j["facts"] = nlohmann::json::array();
  for (const auto& f : facts) j["facts"].push_back({f.subject, f.relation, f.object});
  j["languages"] = nlohmann::json::array();
  for (const auto& l : languages) {
    j["languages"].push_back(
        {{"id", l.id}, {"exposure", l.exposure}, {"lexicon", l.lexicon}, {"templates", l.templates}});
  }
  return j;
}

FactWorldSpec FactWorldSpec::from_json(const nlohmann::json& j) {
  FactWorldSpec spec;
  try {
    spec.name = j.value("name", std::string("world"));
    spec.entities = j.at("entities").get<std::vector<std::string>>();
    spec.relations = j.at("relations").get<std::vector<std::string>>();
    spec.sentences_per_fact = j.value("sentences_per_fact", 1);
    for (const auto& f : j.at("facts")) {
      spec.facts.push_back({f.at(0).get<std::string>(), f.at(1).get<std::string>(),
                            f.at(2).get<std::string>()});
    }
    for (const auto& l : j.at("languages")) {
      LanguageSpec lang;
      lang.id = l.at("id").get<std::string>();
      lang.exposure = l.at("exposure").get<double>();
      lang.lexicon = l.at("lexicon").get<std::map<std::string, std::string>>();
      lang.templates = l.at("templates").get<std::map<std::string, std::string>>();
      spec.languages.push_back(std::move(lang));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("malformed fact world spec: ") + e.what());
  }
  return spec;
}

FactWorldSpec reference_world_spec(double pivot_exposure, double target_exposure) {
  FactWorldSpec spec;
  spec.name = "reference";
  spec.sentences_per_fact = 1;
  struct RelationDef {
    const char* id;
    const char* pivot_template;
    const char* target_template;
    const char* object_stem;
  };
  const RelationDef defs[] = {
      {"P17", "[X] is located in [Y] .", "[X] wa basho ni [Y] aru .", "country"},
      {"P19", "[X] was born in [Y] .", "[X] wa umare ta [Y] de .", "city"},
      {"P37", "the official language of [X] is [Y] .", "ko no kokugo [X] wa [Y] desu .", "tongue"},
      {"P140", "[X] is affiliated with the [Y] religion .", "[X] wa shukyo no [Y] shinja da .", "faith"},
  };
  constexpr int kSubjectsPerRelation = 10;
  constexpr int kObjectsPerRelation = 5;

  LanguageSpec pivot{"en", pivot_exposure, {}, {}};
  LanguageSpec target{"xx", target_exposure, {}, {}};
  int subject_counter = 0;
  for (std::size_t r = 0; r < std::size(defs); ++r) {
    const auto& d = defs[r];
    spec.relations.push_back(d.id);
    pivot.templates[d.id] = d.pivot_template;
    target.templates[d.id] = d.target_template;
    std::vector<std::string> objects;
    for (int o = 0; o < kObjectsPerRelation; ++o) {
      const std::string entity = std::string(d.object_stem) + std::to_string(o);
      objects.push_back(entity);
      spec.entities.push_back(entity);
      pivot.lexicon[entity] = entity;
      target.lexicon[entity] = entity;
    }
    for (int s = 0; s < kSubjectsPerRelation; ++s) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "ent%02d", subject_counter++);
      const std::string entity = buf;
      spec.entities.push_back(entity);
      pivot.lexicon[entity] = entity;
      target.lexicon[entity] = entity;
      // Fixed scrambled assignment; every object is used twice per relation.
      const int object_index = (s * 3 + static_cast<int>(r) * 2 + (s / 5)) % kObjectsPerRelation;
      spec.facts.push_back({entity, d.id, objects[static_cast<std::size_t>(object_index)]});
    }
  }
  spec.languages = {std::move(pivot), std::move(target)};
  return spec;
}

namespace {

Sentence realize(const Vocabulary& vocab, const LanguageSpec& lang, const Fact& fact,
                 const std::string& uuid) {
  const std::string& tmpl = lang.templates.at(fact.relation);
  const std::string& subject = lang.lexicon.at(fact.subject);
  const std::string& object = lang.lexicon.at(fact.object);
  Sentence s;
  s.lang = lang.id;
  s.uuid = uuid;
  s.text = render(tmpl, subject, object);
  s.token_ids = vocab.encode(s.text);
  const std::string prefix = render(tmpl.substr(0, tmpl.find("[Y]")), subject, "");
  const std::size_t start = split_words(prefix).size();
  const std::size_t len = split_words(object).size();
  for (std::size_t i = 0; i < len; ++i) s.object_positions.push_back(start + i);
  return s;
}

}  // namespace

Corpus generate_world(const FactWorldSpec& spec, std::uint64_t seed) {
  spec.validate();
  Corpus corpus;
  for (const auto& lang : spec.languages) {
    for (const auto& r : spec.relations) {
      for (const auto& w : split_words(lang.templates.at(r))) {
        if (w != "[X]" && w != "[Y]") corpus.vocab.add(w);
      }
    }
    for (const auto& e : spec.entities) {
      for (const auto& w : split_words(lang.lexicon.at(e))) corpus.vocab.add(w);
    }
  }

  auto uuid_of = [](std::size_t i) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "fact-%04zu", i);
    return std::string(buf);
  };

  for (std::size_t li = 0; li < spec.languages.size(); ++li) {
    const auto& lang = spec.languages[li];
    std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ULL * (li + 1)));
    std::vector<std::size_t> order(spec.facts.size());
    std::iota(order.begin(), order.end(), 0);
    shuffle_in_place(order, rng);
    const auto covered_count = static_cast<std::size_t>(
        std::llround(lang.exposure * static_cast<double>(spec.facts.size())));
    std::vector<std::size_t> covered(order.begin(),
                                     order.begin() + static_cast<std::ptrdiff_t>(covered_count));
    std::sort(covered.begin(), covered.end());

    auto& sentences = corpus.sentences[lang.id];
    for (std::size_t fi : covered) {
      for (int rep = 0; rep < spec.sentences_per_fact; ++rep) {
        sentences.push_back(realize(corpus.vocab, lang, spec.facts[fi], uuid_of(fi)));
      }
    }
    auto& parallel = corpus.parallel[lang.id];
    for (std::size_t fi = 0; fi < spec.facts.size(); ++fi) {
      const auto& f = spec.facts[fi];
      parallel.push_back(realize(corpus.vocab, lang, f, uuid_of(fi)));
      corpus.probes.push_back({lang.id, f.relation, lang.templates.at(f.relation),
                               lang.lexicon.at(f.subject), lang.lexicon.at(f.object), uuid_of(fi)});
    }
  }
  return corpus;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (objective == Objective::masked_lm && !(mask_fraction > 0.0 && mask_fraction <= 1.0)) {
    throw ConfigError("mask_fraction must lie in (0, 1]");
  }
  if (max_grad_norm < 0.0) throw ConfigError("max_grad_norm must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"seed", seed},
          {"objective", objective == Objective::masked_lm ? "masked_lm" : "causal_lm"},
          {"mask_fraction", mask_fraction},
          {"max_grad_norm", max_grad_norm}};
}

std::vector<TrainingExample> training_examples(const Corpus& corpus) {
  std::vector<TrainingExample> out;
  for (const auto& [lang, sentences] : corpus.sentences) {
    for (const auto& s : sentences) {
      TrainingExample ex;
      ex.tokens.push_back(corpus.vocab.bos_id());
      ex.tokens.insert(ex.tokens.end(), s.token_ids.begin(), s.token_ids.end());
      for (auto p : s.object_positions) ex.object_positions.push_back(p + 1);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

LossItem make_loss_item(const TrainingExample& example, const TrainConfig& config, TokenId mask_id,
                        std::mt19937_64& rng) {
  LossItem item;
  item.input = example.tokens;
  const std::size_t len = example.tokens.size();
  if (config.objective == Objective::causal_lm) {
    // Logits at position p predict token p + 1.
    for (std::size_t p = 0; p + 1 < len; ++p) item.targets.emplace_back(p, example.tokens[p + 1]);
    return item;
  }
  if (len < 2) return item;
  const std::size_t content = len - 1;
  std::vector<bool> masked(len, false);
  std::size_t count = 0;
  for (auto p : example.object_positions) {
    if (p >= 1 && p < len && unit_uniform(rng) < config.mask_fraction && !masked[p]) {
      masked[p] = true;
      ++count;
    }
  }
  const auto quota = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(0.15 * static_cast<double>(content))));
  while (count < std::min(quota, content)) {
    const std::size_t p = 1 + static_cast<std::size_t>(rng() % content);
    if (!masked[p]) {
      masked[p] = true;
      ++count;
    }
  }
  for (std::size_t p = 1; p < len; ++p) {
    if (masked[p]) {
      item.targets.emplace_back(p, example.tokens[p]);
      item.input[p] = mask_id;
    }
  }
  return item;
}

Model train(const Model& model, std::span<const TrainingExample> examples, const TrainConfig& config,
            TrainReport* report) {
  config.validate();
  if (config.epochs == 0) return model;
  if (examples.empty()) throw InputError("no training examples");
  const ModelConfig& mc = model.config();
  if ((config.objective == Objective::causal_lm) != (mc.mode == ModelMode::causal)) {
    throw ConfigError("training objective does not match the model mode");
  }

  std::mt19937_64 rng(config.seed);
  Params<float> params = model.params();
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_in_place(order, rng);
    std::vector<LossItem> items;
    items.reserve(order.size());
    for (auto idx : order) items.push_back(make_loss_item(examples[idx], config, mc.mask_token_id, rng));

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < items.size(); start += batch) {
      const std::size_t end = std::min(items.size(), start + batch);
      Params<float> grads;
      Model current(mc, std::move(params));
      const double loss =
          batch_loss(current, std::span<const LossItem>(items.data() + start, end - start), &grads);
      params = current.params();
      ++step;
      if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite loss at step " + std::to_string(step) + " (epoch " +
                              std::to_string(epoch + 1) + ")");
      }
      double scale = config.learning_rate;
      if (config.max_grad_norm > 0.0) {
        double norm_sq = 0.0;
        for (const auto* g : tensor_slots(std::as_const(grads)))
          for (float x : *g) norm_sq += static_cast<double>(x) * x;
        const double norm = std::sqrt(norm_sq);
        if (norm > config.max_grad_norm) scale *= config.max_grad_norm / norm;
      }
      auto dst = tensor_slots(params);
      const auto src = tensor_slots(std::as_const(grads));
      for (std::size_t t = 0; t < dst.size(); ++t) {
        auto& w = *dst[t];
        const auto& g = *src[t];
        for (std::size_t i = 0; i < w.size(); ++i) {
          w[i] -= static_cast<float>(scale * g[i]);
          if (!std::isfinite(w[i])) {
            throw DivergenceError("non-finite parameter after step " + std::to_string(step) + " (epoch " +
                                  std::to_string(epoch + 1) + ")");
          }
        }
      }
      epoch_loss += loss;
      ++batches;
    }
    if (report) report->epoch_losses.push_back(epoch_loss / static_cast<double>(batches));
  }
  if (report) report->steps = step;
  return Model(mc, std::move(params));
}

}  // namespace lrp2
