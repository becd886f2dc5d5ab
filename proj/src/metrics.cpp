#include "lrp2/metrics.hpp"

#include <algorithm>

#include "lrp2/errors.hpp"

namespace lrp2 {

EvaluationSets evaluation_sets(const std::string& lang, const std::vector<ProbeResult>& results,
                               const std::vector<ProbeResult>& pivot_results) {
  EvaluationSets sets;
  sets.lang = lang;
  for (const auto& r : results) {
    sets.probed.insert(r.uuid);
    if (r.correct) sets.correct.insert(r.uuid);
  }
  for (const auto& r : pivot_results) {
    if (r.correct) sets.pivot_correct.insert(r.uuid);
  }
  return sets;
}

double accuracy(const EvaluationSets& sets) {
  if (sets.probed.empty()) throw InputError("accuracy for " + sets.lang + ": no probed queries");
  if (!std::includes(sets.probed.begin(), sets.probed.end(), sets.correct.begin(), sets.correct.end())) {
    throw InputError("accuracy for " + sets.lang + ": correct set is not a subset of the probed set");
  }
  return 100.0 * static_cast<double>(sets.correct.size()) / static_cast<double>(sets.probed.size());
}

double transferability(const UuidSet& correct, const UuidSet& pivot_correct) {
  std::size_t both = 0;
  for (const auto& u : correct) both += pivot_correct.count(u);
  const std::size_t either = correct.size() + pivot_correct.size() - both;
  if (either == 0) return 0.0;
  return 100.0 * static_cast<double>(both) / static_cast<double>(either);
}

double transferability(const EvaluationSets& sets) { return transferability(sets.correct, sets.pivot_correct); }

std::string to_string(Family f) { return f == Family::indo_european ? "Indo-European" : "non-Indo-European"; }

std::string to_string(Resource r) {
  switch (r) {
    case Resource::high: return "high";
    case Resource::medium: return "medium";
    case Resource::low: return "low";
  }
  return "high";
}

Family parse_family(const std::string& s) {
  if (s == "Indo-European") return Family::indo_european;
  if (s == "non-Indo-European") return Family::non_indo_european;
  throw ValidationError("unknown language family '" + s + "'");
}

Resource parse_resource(const std::string& s) {
  if (s == "high") return Resource::high;
  if (s == "medium") return Resource::medium;
  if (s == "low") return Resource::low;
  throw ValidationError("unknown resource tier '" + s + "'");
}

Resource ResourceThresholds::tier(long long wiki_articles) const {
  if (wiki_articles >= high_min) return Resource::high;
  if (wiki_articles < low_below) return Resource::low;
  return Resource::medium;
}

void LanguageMeta::validate(const ResourceThresholds& thresholds) const {
  if (lang.empty()) throw ValidationError("language meta with empty lang");
  if (wiki_articles < 0) throw ValidationError(lang + ": negative wiki_articles");
  const Resource expected = thresholds.tier(wiki_articles);
  if (expected != resource) {
    throw ValidationError(lang + ": resource '" + to_string(resource) + "' but " +
                          std::to_string(wiki_articles) + " articles implies '" + to_string(expected) + "'");
  }
}

GroupedReport aggregate(const std::vector<LanguageMetrics>& metrics,
                        const std::map<std::string, LanguageMeta>& meta, const std::string& pivot,
                        const std::string& model_name, const std::string& config_name) {
  GroupedReport report{model_name, config_name, {}};
  const char* names[] = {"Indo-European", "non-Indo-European", "high-resource", "medium-resource",
                         "low-resource", "all"};
  struct Acc {
    double accuracy = 0.0;
    double transferability = 0.0;
    int count = 0;
  };
  Acc groups[6];
  GroupRow pivot_row{pivot, std::nullopt, std::nullopt};
  for (const auto& m : metrics) {
    if (m.lang == pivot) {
      pivot_row = {pivot, m.accuracy, kPivotTransferability};
      continue;
    }
    const auto it = meta.find(m.lang);
    if (it == meta.end()) throw ReportError("no language meta for '" + m.lang + "'");
    const LanguageMeta& lm = it->second;
    const int family = lm.family == Family::indo_european ? 0 : 1;
    const int tier = lm.resource == Resource::high ? 2 : lm.resource == Resource::medium ? 3 : 4;
    for (int g : {family, tier, 5}) {
      groups[g].accuracy += m.accuracy;
      groups[g].transferability += m.transferability;
      ++groups[g].count;
    }
  }
  report.rows.push_back(pivot_row);
  for (int g = 0; g < 6; ++g) {
    GroupRow row{names[g], std::nullopt, std::nullopt};
    if (groups[g].count > 0) {
      row.accuracy = groups[g].accuracy / groups[g].count;
      row.transferability = groups[g].transferability / groups[g].count;
    }
    report.rows.push_back(row);
  }
  return report;
}

std::vector<RelationTransferRow> relation_transferability(const std::vector<RelationTransfer>& items) {
  std::map<std::string, std::pair<int, int>> tally;  // relation -> (improved, languages)
  for (const auto& item : items) {
    if (item.configs.empty()) {
      throw InputError("relation " + item.relation + " / " + item.lang + ": no configurations evaluated");
    }
    const double best = *std::max_element(item.configs.begin(), item.configs.end());
    auto& [improved, languages] = tally[item.relation];
    ++languages;
    if (best > item.baseline) ++improved;
  }
  std::vector<RelationTransferRow> rows;
  for (const auto& [relation, t] : tally) {
    rows.push_back({relation, 100.0 * t.first / t.second, t.second});
  }
  return rows;
}

std::map<std::string, double> per_relation_transferability(const std::vector<ProbeQuery>& queries,
                                                           const UuidSet& correct,
                                                           const UuidSet& pivot_correct) {
  std::map<std::string, UuidSet> by_relation;
  for (const auto& q : queries) by_relation[q.relation].insert(q.uuid);
  std::map<std::string, double> out;
  for (const auto& [relation, uuids] : by_relation) {
    UuidSet a;
    UuidSet b;
    for (const auto& u : uuids) {
      if (correct.contains(u)) a.insert(u);
      if (pivot_correct.contains(u)) b.insert(u);
    }
    out[relation] = transferability(a, b);
  }
  return out;
}

}  // namespace lrp2
