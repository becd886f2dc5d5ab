#include "lrp2/sweep.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lrp2/errors.hpp"
#include "lrp2/intervention.hpp"
#include "lrp2/util.hpp"

namespace lrp2 {

std::vector<std::pair<int, int>> full_grid(int num_layers) {
  std::vector<std::pair<int, int>> grid;
  for (int i = 1; i <= num_layers; ++i)
    for (int j = i + 1; j <= num_layers; ++j) grid.emplace_back(i, j);
  return grid;
}

namespace {

void require_inputs(const SweepInputs& in) {
  if (!in.model || !in.vocab || !in.lang_vectors || !in.pivot_vectors) {
    throw ConfigError("sweep needs a model, a vocabulary and both vector sets");
  }
  if (in.queries.empty()) throw InputError("sweep for " + in.lang + ": no probe queries");
}

std::uint64_t hash_floats(const std::vector<float>& v, std::uint64_t h) {
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float)), h);
}

// Stable digest of everything that determines a grid point's result.
std::string inputs_key(const SweepInputs& in) {
  std::uint64_t h = fnv1a64(in.model->config().to_json().dump());
  for (const auto* t : tensor_slots(in.model->params())) h = hash_floats(*t, h);
  for (const auto& w : in.vocab->words()) h = fnv1a64(w + '\n', h);
  h = hash_floats(in.lang_vectors->vectors.data(), h);
  h = hash_floats(in.pivot_vectors->vectors.data(), h);
  for (const auto* qs : {&in.queries, &in.pivot_queries}) {
    for (const auto& q : *qs) {
      h = fnv1a64(q.lang + '\x1f' + q.relation + '\x1f' + q.template_text + '\x1f' + q.subject + '\x1f' +
                      q.object + '\x1f' + q.uuid + '\x1e',
                  h);
    }
  }
  h = fnv1a64(in.lang + '\x1f' + in.pivot + '\x1f' + std::to_string(in.probe_options.pool_cap.value_or(0)) +
                  '\x1f' + std::to_string(in.probe_options.seed),
              h);
  return hex64(h);
}

nlohmann::json entry_json(const SweepEntry& e) {
  return {{"i", e.i},
          {"j", e.j},
          {"accuracy", e.accuracy},
          {"transferability", e.transferability},
          {"relation_transferability", e.relation_transferability}};
}

SweepEntry entry_from_json(const nlohmann::json& j) {
  SweepEntry e;
  e.i = j.at("i").get<int>();
  e.j = j.at("j").get<int>();
  e.accuracy = j.at("accuracy").get<double>();
  e.transferability = j.at("transferability").get<double>();
  e.relation_transferability = j.at("relation_transferability").get<std::map<std::string, double>>();
  return e;
}

std::optional<SweepEntry> read_cached(const std::filesystem::path& file, const std::string& key) {
  std::ifstream in(file);
  if (!in) return std::nullopt;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.value("key", "") != key) return std::nullopt;
    return entry_from_json(j.at("entry"));
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;  // partially written cache file; recompute
  }
}

void write_cached(const std::filesystem::path& file, const std::string& key, const SweepEntry& e) {
  const auto tmp = std::filesystem::path(file.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw InputError("cannot write sweep cache " + tmp.string());
    out << nlohmann::json{{"key", key}, {"entry", entry_json(e)}}.dump() << "\n";
  }
  std::filesystem::rename(tmp, file);
}

}  // namespace

SweepEntry evaluate_config(const SweepInputs& in, int i, int j, const UuidSet& pivot_correct) {
  std::vector<Hook> hooks;
  if (i != 0 || j != 0) {
    const InterventionSpec spec{in.lang, in.pivot, i, j, in.lang_vectors, in.pivot_vectors};
    hooks = make_hooks(spec, in.model->config());
  }
  const auto results = probe(*in.model, *in.vocab, in.queries, hooks, in.probe_options);
  EvaluationSets sets;
  sets.lang = in.lang;
  for (const auto& r : results) {
    sets.probed.insert(r.uuid);
    if (r.correct) sets.correct.insert(r.uuid);
  }
  sets.pivot_correct = pivot_correct;
  SweepEntry e;
  e.i = i;
  e.j = j;
  e.accuracy = accuracy(sets);
  e.transferability = transferability(sets);
  e.relation_transferability = per_relation_transferability(in.queries, sets.correct, pivot_correct);
  return e;
}

SweepResult run_sweep(const SweepInputs& in, const std::optional<std::vector<std::pair<int, int>>>& grid,
                      const std::optional<std::filesystem::path>& cache_dir) {
  require_inputs(in);
  const ModelConfig& config = in.model->config();
  std::vector<std::pair<int, int>> pairs = grid ? *grid : full_grid(config.num_layers);
  std::set<std::pair<int, int>> seen;
  for (const auto& [i, j] : pairs) {
    InterventionSpec spec;
    spec.lirp_layer = i;
    spec.lsrp_layer = j;
    if (auto violation = validate_spec(spec, config)) {
      throw ConfigError("grid pair (" + std::to_string(i) + ", " + std::to_string(j) + "): " + *violation);
    }
    if (!seen.insert({i, j}).second) {
      throw ConfigError("grid pair (" + std::to_string(i) + ", " + std::to_string(j) + ") listed twice");
    }
  }
  std::sort(pairs.begin(), pairs.end());

  const auto pivot_results = probe(*in.model, *in.vocab, in.pivot_queries, {}, in.probe_options);
  UuidSet pivot_correct;
  for (const auto& r : pivot_results)
    if (r.correct) pivot_correct.insert(r.uuid);

  std::string key;
  if (cache_dir) {
    std::filesystem::create_directories(*cache_dir);
    key = inputs_key(in);
  }
  // Slot 0 is the baseline.
  std::vector<SweepEntry> slots(pairs.size() + 1);
  parallel_for(slots.size(), in.jobs, [&](std::size_t s) {
    const int i = s == 0 ? 0 : pairs[s - 1].first;
    const int j = s == 0 ? 0 : pairs[s - 1].second;
    std::filesystem::path file;
    if (cache_dir) {
      file = *cache_dir / (in.lang + "_" + std::to_string(i) + "_" + std::to_string(j) + ".json");
      if (auto cached = read_cached(file, key)) {
        slots[s] = std::move(*cached);
        return;
      }
    }
    slots[s] = evaluate_config(in, i, j, pivot_correct);
    if (cache_dir) write_cached(file, key, slots[s]);
  });

  SweepResult result;
  result.lang = in.lang;
  result.baseline = slots[0];
  result.entries.assign(slots.begin() + 1, slots.end());
  return result;
}

std::string to_string(Criterion c) { return c == Criterion::accuracy ? "accuracy" : "transferability"; }

Criterion parse_criterion(const std::string& s) {
  if (s == "accuracy") return Criterion::accuracy;
  if (s == "transferability") return Criterion::transferability;
  throw ConfigError("unknown criterion '" + s + "'");
}

double criterion_value(const SweepEntry& e, Criterion c) {
  return c == Criterion::accuracy ? e.accuracy : e.transferability;
}

BestConfig select_best(const SweepResult& result, Criterion criterion) {
  const SweepEntry* best = &result.baseline;
  for (const auto& e : result.entries) {
    const double v = criterion_value(e, criterion);
    const double b = criterion_value(*best, criterion);
    if (v > b || (v == b && std::pair{e.i, e.j} < std::pair{best->i, best->j})) best = &e;
  }
  return {best->i, best->j, criterion_value(*best, criterion), best->is_baseline()};
}

bool best_configs_disagree(const SweepResult& result) {
  const auto a = select_best(result, Criterion::accuracy);
  const auto t = select_best(result, Criterion::transferability);
  return a.i != t.i || a.j != t.j;
}

std::map<int, double> gap_curve(const SweepResult& result, Criterion criterion) {
  std::map<int, double> curve;
  for (const auto& e : result.entries) {
    const int g = e.j - e.i;
    const double v = criterion_value(e, criterion);
    auto [it, inserted] = curve.emplace(g, v);
    if (!inserted) it->second = std::max(it->second, v);
  }
  return curve;
}

}  // namespace lrp2
