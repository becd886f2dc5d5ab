// lrp2: command-line entry point for every pipeline stage.

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lrp2/data_io.hpp"
#include "lrp2/errors.hpp"
#include "lrp2/geometry.hpp"
#include "lrp2/intervention.hpp"
#include "lrp2/langvec.hpp"
#include "lrp2/metrics.hpp"
#include "lrp2/neurons.hpp"
#include "lrp2/probing.hpp"
#include "lrp2/sweep.hpp"
#include "lrp2/trainer.hpp"
#include "lrp2/util.hpp"
#include "lrp2/weights_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lrp2;

namespace {

// ---- run bookkeeping

// The effective seed: LRP2_SEED when set, else the flag value.
std::uint64_t resolve_seed(std::uint64_t flag) {
  const char* env = std::getenv("LRP2_SEED");
  if (!env) return flag;
  const std::string s = env;
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || end != s.data() + s.size()) {
    throw UsageError("LRP2_SEED must be a non-negative integer, got '" + s + "'");
  }
  return v;
}

// Config hash over the subcommand, every output-affecting option and the
// bytes of every input file. Output paths and --jobs are excluded.
class RunConfig {
 public:
  RunConfig(std::string command, std::uint64_t seed) : seed_(seed) {
    doc_["command"] = std::move(command);
    doc_["seed"] = seed;
  }

  template <typename V>
  void set(const std::string& key, const V& value) {
    doc_["options"][key] = value;
  }

  void input(const std::string& key, const fs::path& path) {
    doc_["inputs"][key] = hex64(fnv1a64(read_file(path)));
  }

  // Order-independent: the file hashes are sorted.
  void inputs(const std::string& key, const std::vector<std::string>& paths) {
    std::vector<std::string> hashes;
    for (const auto& p : paths) hashes.push_back(hex64(fnv1a64(read_file(p))));
    std::sort(hashes.begin(), hashes.end());
    doc_["inputs"][key] = hashes;
  }

  OutputMeta meta() const {
    OutputMeta m;
    m.seed = seed_;
    m.config_hash = hex64(fnv1a64(doc_.dump()));
    return m;
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  json doc_ = json::object();
};

// ---- shared loading

struct LoadedModel {
  Model model;
  Vocabulary vocab;
};

LoadedModel load_model(const fs::path& path) {
  auto file = read_weight_file(path);
  if (!file.vocab) throw InputError(path.string() + ": weight file carries no vocabulary");
  return {std::move(file.model), std::move(*file.vocab)};
}

std::vector<ProbeQuery> queries_for(const std::vector<ProbeQuery>& all, const std::string& lang) {
  std::vector<ProbeQuery> out;
  for (const auto& q : all)
    if (q.lang == lang) out.push_back(q);
  if (out.empty()) throw InputError("dataset holds no queries for language '" + lang + "'");
  return out;
}

fs::path vector_file(const fs::path& dir, const std::string& lang) { return dir / (lang + ".lrpw"); }

std::string config_name(std::optional<std::pair<int, int>> layers) {
  return layers ? std::to_string(layers->first) + "-" + std::to_string(layers->second) : "baseline";
}

void check_mode(const Model& model, const std::optional<std::string>& mode) {
  if (mode && parse_mode(*mode) != model.config().mode) {
    throw ConfigError("--mode " + *mode + " does not match the " + to_string(model.config().mode) + " model");
  }
}

// Options shared by probe, sweep and the analysis commands.
struct ProbeArgs {
  std::string model;
  std::string dataset;
  std::vector<std::string> langs;
  std::string pivot = "en";
  std::string vectors;
  std::string mode;
  int pool_cap = 0;
  std::string out;
  int jobs = 1;
  std::uint64_t seed = 0;
  int lirp = 0;
  int lsrp = 0;
  std::string sweep_file;
  std::string criterion = "transferability";

  CLI::Option* mode_opt = nullptr;
  CLI::Option* pool_opt = nullptr;
  CLI::Option* lirp_opt = nullptr;
  CLI::Option* lsrp_opt = nullptr;
  CLI::Option* sweep_opt = nullptr;
};

void add_common(CLI::App* cmd, ProbeArgs& a, bool many_langs, bool vectors_required) {
  cmd->add_option("--model", a.model, "LRPW model file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--dataset", a.dataset, "probe dataset JSONL")->required()->check(CLI::ExistingFile);
  auto* lang = cmd->add_option("--lang", a.langs, "target language")->required();
  if (many_langs) {
    lang->delimiter(',');
  } else {
    lang->expected(1);
  }
  cmd->add_option("--pivot", a.pivot, "pivot language")->capture_default_str();
  auto* vec = cmd->add_option("--vectors", a.vectors, "directory of <lang>.lrpw vector files");
  if (vectors_required) vec->required();
  vec->check(CLI::ExistingDirectory);
  a.mode_opt = cmd->add_option("--mode", a.mode, "masked or causal; must match the model");
  a.pool_opt = cmd->add_option("--pool-cap", a.pool_cap, "candidate cap (causal models)");
  cmd->add_option("--out", a.out, "output directory")->required();
  cmd->add_option("--jobs", a.jobs, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--seed", a.seed, "seed (LRP2_SEED overrides)")->capture_default_str();
}

void add_layers(CLI::App* cmd, ProbeArgs& a, bool allow_sweep) {
  a.lirp_opt = cmd->add_option("--lirp-layer", a.lirp, "LIRP layer i");
  a.lsrp_opt = cmd->add_option("--lsrp-layer", a.lsrp, "LSRP layer j");
  if (allow_sweep) {
    a.sweep_opt = cmd->add_option("--sweep", a.sweep_file, "sweep JSONL; uses its best config")
                      ->check(CLI::ExistingFile);
    cmd->add_option("--criterion", a.criterion, "best-config criterion for --sweep")->capture_default_str();
  }
}

// (i, j) from explicit layers or a sweep file; nullopt means baseline only.
std::optional<std::pair<int, int>> chosen_layers(const ProbeArgs& a, RunConfig& run) {
  const bool have_i = a.lirp_opt->count() > 0;
  const bool have_j = a.lsrp_opt->count() > 0;
  if (have_i != have_j) throw UsageError("--lirp-layer and --lsrp-layer must be given together");
  const bool have_sweep = a.sweep_opt && a.sweep_opt->count() > 0;
  if (have_sweep && have_i) throw UsageError("explicit layers and --sweep are mutually exclusive");
  if (have_i) return std::pair{a.lirp, a.lsrp};
  if (!have_sweep) return std::nullopt;
  run.input("sweep", a.sweep_file);
  run.set("criterion", a.criterion);
  const auto sweep = load_sweep(a.sweep_file);
  if (sweep.lang != a.langs.front()) {
    throw UsageError("--sweep file is for language '" + sweep.lang + "', not '" + a.langs.front() + "'");
  }
  const auto best = select_best(sweep, parse_criterion(a.criterion));
  if (best.baseline) return std::nullopt;
  return std::pair{best.i, best.j};
}

struct VectorPair {
  LanguageVectorSet lang;
  LanguageVectorSet pivot;
};

VectorPair load_vectors(const ProbeArgs& a, const std::string& lang, RunConfig& run) {
  if (a.vectors.empty()) throw UsageError("--vectors is required for an intervention");
  const auto lp = vector_file(a.vectors, lang);
  const auto pp = vector_file(a.vectors, a.pivot);
  run.input("vectors." + lang, lp);
  run.input("vectors." + a.pivot, pp);
  VectorPair v{load_language_vectors(lp), load_language_vectors(pp)};
  if (v.lang.lang != lang || v.pivot.lang != a.pivot) {
    throw InputError("vector files in " + a.vectors + " do not hold languages " + lang + " and " + a.pivot);
  }
  return v;
}

void validate_layers(const std::pair<int, int>& layers, const ModelConfig& config) {
  InterventionSpec spec;
  spec.lirp_layer = layers.first;
  spec.lsrp_layer = layers.second;
  if (auto violation = validate_spec(spec, config)) throw ConfigError(*violation);
}

ProbeOptions probe_options(const ProbeArgs& a, std::uint64_t seed) {
  ProbeOptions o;
  if (a.pool_opt->count() > 0) o.pool_cap = a.pool_cap;
  o.seed = seed;
  o.jobs = a.jobs;
  return o;
}

void record_common(const ProbeArgs& a, RunConfig& run) {
  run.input("model", a.model);
  run.input("dataset", a.dataset);
  run.set("langs", a.langs);
  run.set("pivot", a.pivot);
  if (a.pool_opt->count() > 0) run.set("pool_cap", a.pool_cap);
}

// ---- train-toy

struct TrainArgs {
  std::string spec;
  std::string out;
  std::uint64_t seed = 0;
  int epochs = 300;
  double lr = 0.1;
  int batch = 8;
  int layers = 4;
  int hidden = 32;
  int heads = 4;
  int ffn = 64;
  int max_seq_len = 16;
  std::string mode = "masked";
  double mask_fraction = 1.0;
};

int run_train(const TrainArgs& a) {
  RunConfig run("train-toy", resolve_seed(a.seed));
  run.input("spec", a.spec);
  run.set("epochs", a.epochs);
  run.set("lr", a.lr);
  run.set("batch_size", a.batch);
  run.set("layers", a.layers);
  run.set("hidden", a.hidden);
  run.set("heads", a.heads);
  run.set("ffn", a.ffn);
  run.set("max_seq_len", a.max_seq_len);
  run.set("mode", a.mode);
  run.set("mask_fraction", a.mask_fraction);
  const auto meta = run.meta();

  json spec_json;
  try {
    spec_json = json::parse(read_file(a.spec));
  } catch (const json::parse_error& e) {
    throw SpecError(a.spec + ": not valid JSON (" + e.what() + ")");
  }
  const FactWorldSpec spec = FactWorldSpec::from_json(spec_json);
  const Corpus corpus = generate_world(spec, run.seed());

  ModelConfig config;
  config.num_layers = a.layers;
  config.hidden_dim = a.hidden;
  config.num_heads = a.heads;
  config.ffn_dim = a.ffn;
  config.vocab_size = static_cast<int>(corpus.vocab.size());
  config.max_seq_len = a.max_seq_len;
  config.mode = parse_mode(a.mode);

  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch;
  tc.learning_rate = a.lr;
  tc.seed = run.seed();
  tc.objective = config.mode == ModelMode::masked ? Objective::masked_lm : Objective::causal_lm;
  tc.mask_fraction = a.mask_fraction;
  tc.validate();

  TrainReport report;
  const Model model = train(init_random(config, run.seed()), training_examples(corpus), tc, &report);

  const fs::path out = a.out;
  fs::create_directories(out);
  save_weights(out / "model.lrpw", model, &corpus.vocab, meta_json(meta));
  for (const auto& [lang, sentences] : corpus.sentences) {
    save_corpus(out / ("corpus_" + lang + ".jsonl"), corpus_lines(sentences), meta);
  }
  for (const auto& [lang, sentences] : corpus.parallel) {
    save_corpus(out / ("parallel_" + lang + ".jsonl"), corpus_lines(sentences), meta);
  }
  save_probe_dataset(out / "probes.jsonl", corpus.probes, meta);
  save_manifest(out / "manifest.json", compute_manifest("probes", corpus.probes), meta);
  write_file_atomic(out / "train_log.json", json{{"epoch_losses", report.epoch_losses},
                                                 {"steps", report.steps},
                                                 {"train_config", tc.to_json()},
                                                 {"model_config", config.to_json()},
                                                 {"version", kFormatVersion},
                                                 {"meta", meta_json(meta)}}
                                                    .dump(2) +
                                                "\n");
  std::printf("trained %d epochs, %zu steps, loss %s -> %s\n", a.epochs, report.steps,
              report.epoch_losses.empty() ? "n/a" : format_double(report.epoch_losses.front()).c_str(),
              report.epoch_losses.empty() ? "n/a" : format_double(report.epoch_losses.back()).c_str());
  return 0;
}

// ---- extract-vectors

struct ExtractArgs {
  std::string model;
  std::string corpus;
  std::string lang;
  std::string out;
  int jobs = 1;
  std::uint64_t seed = 0;
};

int run_extract(const ExtractArgs& a) {
  RunConfig run("extract-vectors", resolve_seed(a.seed));
  run.input("model", a.model);
  run.input("corpus", a.corpus);
  run.set("lang", a.lang);
  const auto loaded = load_model(a.model);
  std::vector<std::vector<TokenId>> inputs;
  for (const auto& line : load_corpus(a.corpus, &loaded.vocab)) {
    if (line.lang != a.lang) continue;
    std::vector<TokenId> ids{loaded.vocab.bos_id()};
    ids.insert(ids.end(), line.token_ids.begin(), line.token_ids.end());
    inputs.push_back(std::move(ids));
  }
  if (inputs.empty()) throw InputError(a.corpus + ": no sentences for language '" + a.lang + "'");
  const auto set = language_vectors(loaded.model, inputs, a.lang, a.jobs);
  fs::path out = a.out;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_language_vectors(out, set, meta_json(run.meta()));
  std::printf("num_sentences %d\n", set.num_sentences);
  return 0;
}

// ---- probe

int run_probe(const ProbeArgs& a) {
  RunConfig run("probe", resolve_seed(a.seed));
  record_common(a, run);
  const auto layers = chosen_layers(a, run);
  run.set("layers", layers ? json{layers->first, layers->second} : json(nullptr));
  const auto loaded = load_model(a.model);
  check_mode(loaded.model, a.mode_opt->count() ? std::optional(a.mode) : std::nullopt);
  const std::string& lang = a.langs.front();
  std::vector<Hook> hooks;
  std::optional<VectorPair> vectors;
  if (layers) {
    validate_layers(*layers, loaded.model.config());
    vectors = load_vectors(a, lang, run);
    hooks = make_hooks({lang, a.pivot, layers->first, layers->second, &vectors->lang, &vectors->pivot},
                       loaded.model.config());
  }
  const auto meta = run.meta();
  const auto dataset = load_probe_dataset(a.dataset);
  const auto opts = probe_options(a, run.seed());
  auto results = probe(loaded.model, loaded.vocab, queries_for(dataset.queries, lang), hooks, opts);
  for (auto& r : results) {
    if (layers) {
      r.lirp = layers->first;
      r.lsrp = layers->second;
    }
  }
  const auto pivot_results = probe(loaded.model, loaded.vocab, queries_for(dataset.queries, a.pivot), {}, opts);
  const auto sets = evaluation_sets(lang, results, pivot_results);
  ProbeMetrics m;
  m.lang = lang;
  m.pivot = a.pivot;
  if (layers) {
    m.lirp = layers->first;
    m.lsrp = layers->second;
  }
  m.accuracy = accuracy(sets);
  m.transferability = transferability(sets);
  m.relation_transferability =
      per_relation_transferability(queries_for(dataset.queries, lang), sets.correct, sets.pivot_correct);

  const fs::path out = a.out;
  const std::string tag = lang + "_" + config_name(layers);
  save_results(out / ("results_" + tag + ".jsonl"), results, meta);
  save_probe_metrics(out / ("metrics_" + tag + ".json"), m, meta);
  std::printf("%s %s accuracy %s transferability %s\n", lang.c_str(), config_name(layers).c_str(),
              format_double(m.accuracy).c_str(), format_double(m.transferability).c_str());
  return 0;
}

// ---- sweep

struct SweepArgs {
  ProbeArgs common;
  std::string cache;
};

int run_sweep_cmd(const SweepArgs& s) {
  const ProbeArgs& a = s.common;
  RunConfig run("sweep", resolve_seed(a.seed));
  record_common(a, run);
  const auto loaded = load_model(a.model);
  check_mode(loaded.model, a.mode_opt->count() ? std::optional(a.mode) : std::nullopt);
  const auto dataset = load_probe_dataset(a.dataset);
  std::map<std::string, VectorPair> vectors;
  for (const auto& lang : a.langs) vectors.emplace(lang, load_vectors(a, lang, run));
  const auto meta = run.meta();
  const fs::path out = a.out;
  std::vector<BestConfigRow> best;
  for (const auto& lang : a.langs) {
    SweepInputs in;
    in.model = &loaded.model;
    in.vocab = &loaded.vocab;
    in.lang = lang;
    in.pivot = a.pivot;
    in.lang_vectors = &vectors.at(lang).lang;
    in.pivot_vectors = &vectors.at(lang).pivot;
    in.queries = queries_for(dataset.queries, lang);
    in.pivot_queries = queries_for(dataset.queries, a.pivot);
    in.probe_options = probe_options(a, run.seed());
    in.probe_options.jobs = 1;
    in.jobs = a.jobs;
    std::optional<fs::path> cache;
    if (!s.cache.empty()) cache = fs::path(s.cache);
    const auto result = run_sweep(in, std::nullopt, cache);
    save_sweep(out / ("sweep_" + lang + ".jsonl"), result, meta);
    save_gap_curves(out / ("gap_" + lang + ".csv"), result, meta);
    for (Criterion c : {Criterion::accuracy, Criterion::transferability}) {
      best.push_back({lang, c, select_best(result, c)});
    }
    const auto& t = best.back().best;
    std::printf("%s: %zu configs + baseline; transferability-best %s (%s vs baseline %s)\n", lang.c_str(),
                result.entries.size(), t.baseline ? "baseline" : config_name(std::pair{t.i, t.j}).c_str(),
                format_double(t.value).c_str(), format_double(result.baseline.transferability).c_str());
  }
  save_best_configs(out / "best_configs.csv", best, meta);
  return 0;
}

// ---- analyze-space

int run_space(const ProbeArgs& a) {
  RunConfig run("analyze-space", resolve_seed(a.seed));
  record_common(a, run);
  const auto layers = chosen_layers(a, run);
  run.set("layers", layers ? json{layers->first, layers->second} : json(nullptr));
  const auto loaded = load_model(a.model);
  const std::string& lang = a.langs.front();
  std::vector<Hook> hooks;
  std::optional<VectorPair> vectors;
  if (layers) {
    validate_layers(*layers, loaded.model.config());
    vectors = load_vectors(a, lang, run);
    hooks = make_hooks({lang, a.pivot, layers->first, layers->second, &vectors->lang, &vectors->pivot},
                       loaded.model.config());
  }
  const auto meta = run.meta();
  const auto dataset = load_probe_dataset(a.dataset);
  const auto pairs = parallel_query_pairs(loaded.vocab, queries_for(dataset.queries, lang),
                                          queries_for(dataset.queries, a.pivot));
  std::vector<SpaceDistanceCurve> curves{
      {lang, a.pivot, "baseline", layerwise_cosine(loaded.model, pairs, {}, {}, a.jobs)}};
  if (layers) curves.push_back({lang, a.pivot, config_name(layers), layerwise_cosine(loaded.model, pairs, hooks, {}, a.jobs)});
  save_curves(fs::path(a.out) / ("space_" + lang + ".csv"), curves, meta);
  for (const auto& c : curves) {
    std::printf("%s:", c.config.c_str());
    for (double v : c.values) std::printf(" %.4f", v);
    std::printf("\n");
  }
  return 0;
}

// ---- analyze-neurons

struct NeuronArgs {
  ProbeArgs common;
  int k = 20;
  int steps = 20;
  double gradient_step = 1e-3;
  std::string formula = "iou";
  int max_prompts = 0;
};

std::map<std::string, KnowledgeNeuronSet> neuron_sets(const Model64& model, const Vocabulary& vocab,
                                                      const std::vector<ProbeQuery>& queries,
                                                      const std::string& lang, const AttributionConfig& cfg,
                                                      Hooks64 hooks, int max_prompts, int jobs) {
  std::map<std::string, std::vector<LayerSets>> per_relation;
  for (const auto& q : queries) {
    auto& prompts = per_relation[q.relation];
    if (max_prompts > 0 && static_cast<int>(prompts.size()) >= max_prompts) continue;
    const auto prompt = attribution_prompt(model.config(), vocab, q);
    prompts.push_back(prompt_neurons(prompt_attributions(model, prompt, cfg, hooks, jobs), cfg.k));
  }
  std::map<std::string, KnowledgeNeuronSet> out;
  for (const auto& [relation, prompts] : per_relation) {
    out.emplace(relation, relation_neurons(lang, relation, prompts, cfg.k));
  }
  return out;
}

int run_neurons(const NeuronArgs& n) {
  const ProbeArgs& a = n.common;
  RunConfig run("analyze-neurons", resolve_seed(a.seed));
  record_common(a, run);
  run.set("k", n.k);
  run.set("steps", n.steps);
  run.set("gradient_step", n.gradient_step);
  run.set("formula", n.formula);
  run.set("max_prompts", n.max_prompts);
  const auto layers = chosen_layers(a, run);
  run.set("layers", layers ? json{layers->first, layers->second} : json(nullptr));
  AttributionConfig cfg;
  cfg.k = n.k;
  cfg.riemann_steps = n.steps;
  cfg.gradient_step = n.gradient_step;
  cfg.validate();
  const auto formula = parse_overlap_formula(n.formula);
  const auto loaded = load_model(a.model);
  const Model64 model = cast_model<double>(loaded.model);
  const std::string& lang = a.langs.front();
  std::vector<BasicHook<double>> hooks;
  std::optional<VectorPair> vectors;
  if (layers) {
    validate_layers(*layers, loaded.model.config());
    vectors = load_vectors(a, lang, run);
    hooks = make_hooks64({lang, a.pivot, layers->first, layers->second, &vectors->lang, &vectors->pivot},
                         loaded.model.config());
  }
  auto meta = run.meta();
  meta.extra["overlap_formula"] = to_string(formula);
  const auto dataset = load_probe_dataset(a.dataset);
  const auto lang_q = queries_for(dataset.queries, lang);
  const auto pivot_q = queries_for(dataset.queries, a.pivot);

  const fs::path out = a.out;
  const auto save_all = [&](const std::map<std::string, KnowledgeNeuronSet>& sets, const std::string& l,
                            const std::string& config) {
    for (const auto& [relation, set] : sets) {
      save_neuron_set(out / "neurons" / (l + "_" + config + "_" + relation + ".json"), set, meta);
    }
  };
  const int L = loaded.model.config().num_layers;
  const auto pivot_sets = neuron_sets(model, loaded.vocab, pivot_q, a.pivot, cfg, {}, n.max_prompts, a.jobs);
  save_all(pivot_sets, a.pivot, "baseline");
  const auto base_sets = neuron_sets(model, loaded.vocab, lang_q, lang, cfg, {}, n.max_prompts, a.jobs);
  save_all(base_sets, lang, "baseline");
  std::vector<OverlapReport> reports{overlap_report(base_sets, pivot_sets, L, "baseline", formula)};
  if (layers) {
    const auto hooked = neuron_sets(model, loaded.vocab, lang_q, lang, cfg, hooks, n.max_prompts, a.jobs);
    save_all(hooked, lang, config_name(layers));
    reports.push_back(overlap_report(hooked, pivot_sets, L, config_name(layers), formula));
  }
  save_overlap_report(out / ("overlap_" + lang + ".csv"), reports, meta);
  for (const auto& r : reports) {
    std::printf("%s: same %s different %s\n", r.config.c_str(),
                r.same ? format_double(*r.same).c_str() : "n/a",
                r.different ? format_double(*r.different).c_str() : "n/a");
  }
  return 0;
}

// ---- report

struct ReportArgs {
  std::vector<std::string> metrics;
  std::vector<std::string> sweeps;
  std::string meta;
  std::string pivot = "en";
  std::string model_name;
  std::string out;
  std::uint64_t seed = 0;
};

int run_report(const ReportArgs& a) {
  RunConfig run("report", resolve_seed(a.seed));
  run.inputs("metrics", a.metrics);
  run.inputs("sweeps", a.sweeps);
  run.input("meta", a.meta);
  run.set("pivot", a.pivot);
  run.set("model_name", a.model_name);
  const auto meta = run.meta();

  const auto lang_meta = load_language_meta(a.meta);
  // config name -> lang -> metrics; interventions are reported together as "lrp2".
  std::map<std::string, std::map<std::string, LanguageMetrics>> by_config;
  for (const auto& path : a.metrics) {
    const auto m = load_probe_metrics(path);
    const std::string config = m.lirp ? "lrp2" : "baseline";
    if (!by_config[config].emplace(m.lang, LanguageMetrics{m.lang, m.accuracy, m.transferability}).second) {
      throw ReportError("two " + config + " metrics files for language '" + m.lang + "'");
    }
  }
  if (!by_config.count("baseline")) throw ReportError("no baseline metrics among the inputs");
  // The pivot is never intervened on; its baseline row stands for every config.
  const auto pivot_it = by_config.at("baseline").find(a.pivot);
  std::vector<GroupedReport> reports;
  for (const char* config : {"baseline", "lrp2"}) {
    if (!by_config.count(config)) continue;
    auto langs = by_config.at(config);
    if (pivot_it != by_config.at("baseline").end()) langs.emplace(a.pivot, pivot_it->second);
    std::vector<LanguageMetrics> list;
    for (const auto& [lang, m] : langs) list.push_back(m);
    reports.push_back(aggregate(list, lang_meta, a.pivot, a.model_name, config));
  }
  const fs::path out = a.out;
  save_grouped_report(out / "grouped.csv", reports, meta);
  save_grouped_report_json(out / "grouped.json", reports, meta);

  if (!a.sweeps.empty()) {
    std::vector<RelationTransfer> items;
    for (const auto& path : a.sweeps) {
      const auto sweep = load_sweep(path);
      for (const auto& [relation, base] : sweep.baseline.relation_transferability) {
        RelationTransfer item{relation, sweep.lang, base, {}};
        for (const auto& e : sweep.entries) {
          const auto it = e.relation_transferability.find(relation);
          if (it == e.relation_transferability.end()) {
            throw ReportError(path + ": entry " + std::to_string(e.i) + "-" + std::to_string(e.j) +
                              " lacks relation " + relation);
          }
          item.configs.push_back(it->second);
        }
        items.push_back(std::move(item));
      }
    }
    save_relation_report(out / "relations.csv", relation_transferability(items), meta);
  }
  std::printf("wrote %zu grouped report(s) to %s\n", reports.size(), a.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layer-wise representation projection toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train-toy", "train a toy model on a synthetic fact world");
  train_cmd->add_option("--spec", train_args.spec, "fact-world spec JSON")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_args.out, "output directory")->required();
  train_cmd->add_option("--seed", train_args.seed, "seed (LRP2_SEED overrides)")->capture_default_str();
  train_cmd->add_option("--epochs", train_args.epochs)->capture_default_str()->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--lr", train_args.lr)->capture_default_str();
  train_cmd->add_option("--batch-size", train_args.batch)->capture_default_str();
  train_cmd->add_option("--layers", train_args.layers)->capture_default_str();
  train_cmd->add_option("--hidden", train_args.hidden)->capture_default_str();
  train_cmd->add_option("--heads", train_args.heads)->capture_default_str();
  train_cmd->add_option("--ffn", train_args.ffn)->capture_default_str();
  train_cmd->add_option("--max-seq-len", train_args.max_seq_len)->capture_default_str();
  train_cmd->add_option("--mode", train_args.mode)->capture_default_str()->check(CLI::IsMember({"masked", "causal"}));
  train_cmd->add_option("--mask-fraction", train_args.mask_fraction)->capture_default_str();

  ExtractArgs extract_args;
  auto* extract_cmd = app.add_subcommand("extract-vectors", "average per-layer language vectors");
  extract_cmd->add_option("--model", extract_args.model)->required()->check(CLI::ExistingFile);
  extract_cmd->add_option("--corpus", extract_args.corpus, "corpus JSONL")->required()->check(CLI::ExistingFile);
  extract_cmd->add_option("--lang", extract_args.lang)->required();
  extract_cmd->add_option("--out", extract_args.out, "output .lrpw file")->required();
  extract_cmd->add_option("--jobs", extract_args.jobs)->capture_default_str()->check(CLI::PositiveNumber);
  extract_cmd->add_option("--seed", extract_args.seed)->capture_default_str();

  ProbeArgs probe_args;
  auto* probe_cmd = app.add_subcommand("probe", "rank candidates for every query of one language");
  add_common(probe_cmd, probe_args, false, false);
  add_layers(probe_cmd, probe_args, false);

  SweepArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand("sweep", "evaluate every (i, j) layer pair");
  add_common(sweep_cmd, sweep_args.common, true, true);
  sweep_cmd->add_option("--cache", sweep_args.cache, "directory for resumable per-config results");

  ProbeArgs space_args;
  auto* space_cmd = app.add_subcommand("analyze-space", "layer-wise cosine between parallel queries");
  add_common(space_cmd, space_args, false, false);
  add_layers(space_cmd, space_args, true);

  NeuronArgs neuron_args;
  auto* neuron_cmd = app.add_subcommand("analyze-neurons", "knowledge neurons and their overlap");
  add_common(neuron_cmd, neuron_args.common, false, false);
  add_layers(neuron_cmd, neuron_args.common, true);
  neuron_cmd->add_option("--k", neuron_args.k)->capture_default_str();
  neuron_cmd->add_option("--steps", neuron_args.steps, "Riemann steps")->capture_default_str();
  neuron_cmd->add_option("--gradient-step", neuron_args.gradient_step)->capture_default_str();
  neuron_cmd->add_option("--formula", neuron_args.formula, "iou or over_k")->capture_default_str();
  neuron_cmd->add_option("--max-prompts", neuron_args.max_prompts, "per relation; 0 = all")->capture_default_str();

  ReportArgs report_args;
  auto* report_cmd = app.add_subcommand("report", "grouped and per-relation tables");
  report_cmd->add_option("--metrics", report_args.metrics, "metrics JSON files")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--sweeps", report_args.sweeps, "sweep JSONL files")->check(CLI::ExistingFile);
  report_cmd->add_option("--meta", report_args.meta, "language meta JSONL")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--pivot", report_args.pivot)->capture_default_str();
  report_cmd->add_option("--model-name", report_args.model_name)->required();
  report_cmd->add_option("--out", report_args.out)->required();
  report_cmd->add_option("--seed", report_args.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) return run_train(train_args);
    if (*extract_cmd) return run_extract(extract_args);
    if (*probe_cmd) return run_probe(probe_args);
    if (*sweep_cmd) return run_sweep_cmd(sweep_args);
    if (*space_cmd) return run_space(space_args);
    if (*neuron_cmd) return run_neurons(neuron_args);
    if (*report_cmd) return run_report(report_args);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
