#pragma once

// Exhaustive (i, j) layer-pair evaluation, best-config selection and gap curves.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lrp2/langvec.hpp"
#include "lrp2/metrics.hpp"
#include "lrp2/probing.hpp"

namespace lrp2 {

struct SweepEntry {
  int i = 0;  // 0 with j = 0 marks the hookless baseline
  int j = 0;
  double accuracy = 0.0;
  double transferability = 0.0;
  std::map<std::string, double> relation_transferability;

  bool is_baseline() const { return i == 0 && j == 0; }
  friend bool operator==(const SweepEntry&, const SweepEntry&) = default;
};

struct SweepResult {
  std::string lang;
  SweepEntry baseline;
  std::vector<SweepEntry> entries;  // sorted by (i, j)

  friend bool operator==(const SweepResult&, const SweepResult&) = default;
};

struct SweepInputs {
  const Model* model = nullptr;
  const Vocabulary* vocab = nullptr;
  std::string lang;
  std::string pivot = "en";
  const LanguageVectorSet* lang_vectors = nullptr;
  const LanguageVectorSet* pivot_vectors = nullptr;
  std::vector<ProbeQuery> queries;        // target-language queries
  std::vector<ProbeQuery> pivot_queries;  // uuid-parallel pivot queries
  ProbeOptions probe_options;
  int jobs = 1;  // grid points evaluated concurrently
};

// All pairs 1 <= i < j <= L in (i, j) order.
std::vector<std::pair<int, int>> full_grid(int num_layers);

// Evaluates the baseline and every grid pair. An invalid pair throws
// ConfigError with the validate_spec message. With `cache_dir`, each grid
// point is read from / written to "<lang>_<i>_<j>.json" keyed by a hash of
// every input, so an interrupted sweep resumes.
SweepResult run_sweep(const SweepInputs& inputs,
                      const std::optional<std::vector<std::pair<int, int>>>& grid = std::nullopt,
                      const std::optional<std::filesystem::path>& cache_dir = std::nullopt);

// One probing + metrics pass under (i, j); i = j = 0 runs without hooks.
SweepEntry evaluate_config(const SweepInputs& inputs, int i, int j, const UuidSet& pivot_correct);

enum class Criterion { accuracy, transferability };
std::string to_string(Criterion c);
Criterion parse_criterion(const std::string& s);

double criterion_value(const SweepEntry& e, Criterion c);

struct BestConfig {
  int i = 0;
  int j = 0;
  double value = 0.0;
  bool baseline = false;  // no intervention beat the hookless run

  friend bool operator==(const BestConfig&, const BestConfig&) = default;
};

// Argmax over baseline and entries; ties go to smaller i then smaller j, with
// the baseline ordered as (0, 0).
BestConfig select_best(const SweepResult& result, Criterion criterion);

// True when the accuracy-best and transferability-best configs differ.
bool best_configs_disagree(const SweepResult& result);

// Gap g = j - i -> best value among entries with that gap.
std::map<int, double> gap_curve(const SweepResult& result, Criterion criterion);

}  // namespace lrp2
