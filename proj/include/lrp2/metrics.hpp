#pragma once

// Retrieval accuracy, pivot-centric transferability and grouped reporting.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lrp2/probing.hpp"

namespace lrp2 {

using UuidSet = std::set<std::string>;

struct EvaluationSets {
  std::string lang;
  UuidSet probed;         // D_l
  UuidSet correct;        // R_l, a subset of probed
  UuidSet pivot_correct;  // R_pivot over the same uuid universe
};

// Splits probe results into probed/correct uuid sets.
EvaluationSets evaluation_sets(const std::string& lang, const std::vector<ProbeResult>& results,
                               const std::vector<ProbeResult>& pivot_results);

// 100 |R_l| / |D_l|. Empty D_l or R_l not within D_l throws InputError.
double accuracy(const EvaluationSets& sets);

// 100 |R_l ∩ R_pivot| / |R_l ∪ R_pivot|; 0.0 when both sets are empty.
double transferability(const UuidSet& correct, const UuidSet& pivot_correct);
double transferability(const EvaluationSets& sets);

enum class Family { indo_european, non_indo_european };
enum class Resource { high, medium, low };

std::string to_string(Family f);
std::string to_string(Resource r);
Family parse_family(const std::string& s);
Resource parse_resource(const std::string& s);

struct ResourceThresholds {
  long long high_min = 1'000'000;  // high >= high_min
  long long low_below = 100'000;   // low < low_below

  Resource tier(long long wiki_articles) const;
};

struct LanguageMeta {
  std::string lang;
  Family family = Family::indo_european;
  Resource resource = Resource::high;
  long long wiki_articles = 0;

  // Throws ValidationError when `resource` disagrees with the thresholds.
  void validate(const ResourceThresholds& thresholds = {}) const;
};

struct LanguageMetrics {
  std::string lang;
  double accuracy = 0.0;
  double transferability = 0.0;

  friend bool operator==(const LanguageMetrics&, const LanguageMetrics&) = default;
};

inline constexpr double kPivotTransferability = 1.0;

struct GroupRow {
  std::string group;
  std::optional<double> accuracy;  // nullopt when the group has no language
  std::optional<double> transferability;

  friend bool operator==(const GroupRow&, const GroupRow&) = default;
};

struct GroupedReport {
  std::string model;
  std::string config;
  std::vector<GroupRow> rows;  // pivot row first, then the fixed group order

  friend bool operator==(const GroupedReport&, const GroupedReport&) = default;
};

// Group order: pivot, Indo-European, non-Indo-European, high-resource,
// medium-resource, low-resource, all. The pivot row carries its accuracy and
// the fixed transferability 1. Missing meta throws ReportError.
GroupedReport aggregate(const std::vector<LanguageMetrics>& metrics,
                        const std::map<std::string, LanguageMeta>& meta, const std::string& pivot,
                        const std::string& model_name, const std::string& config_name);

// Per relation and language: baseline transferability plus the value under
// every evaluated configuration.
struct RelationTransfer {
  std::string relation;
  std::string lang;
  double baseline = 0.0;
  std::vector<double> configs;
};

struct RelationTransferRow {
  std::string relation;
  double transferable_percent = 0.0;  // share of languages where some config beats baseline
  int languages = 0;

  friend bool operator==(const RelationTransferRow&, const RelationTransferRow&) = default;
};

// Rows in ascending relation order. A (relation, language) with no configs
// throws InputError.
std::vector<RelationTransferRow> relation_transferability(const std::vector<RelationTransfer>& items);

// Transferability restricted to the uuids of one relation.
std::map<std::string, double> per_relation_transferability(const std::vector<ProbeQuery>& queries,
                                                           const UuidSet& correct,
                                                           const UuidSet& pivot_correct);

}  // namespace lrp2
