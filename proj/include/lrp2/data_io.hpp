#pragma once

// Loading and validation of external data, and persistence of every report.
//
// Output conventions:
//  - CSV files start with one "# key=value ..." meta line, then the header.
//  - JSONL files start with one {"meta": {...}} record.
//  - JSON files carry "version" and "meta" next to their declared keys.
// Meta always holds version, seed, config_hash and tool_version.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lrp2/geometry.hpp"
#include "lrp2/metrics.hpp"
#include "lrp2/neurons.hpp"
#include "lrp2/probing.hpp"
#include "lrp2/sweep.hpp"
#include "lrp2/trainer.hpp"
#include "lrp2/vocab.hpp"

namespace lrp2 {

inline constexpr int kFormatVersion = 1;
inline constexpr std::string_view kToolVersion = "0.1.0";

// Unicode NFC; invalid UTF-8 throws ValidationError.
std::string nfc(std::string_view text);

struct OutputMeta {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string tool_version = std::string(kToolVersion);
  std::map<std::string, std::string> extra;  // written after the fixed keys

  std::optional<std::string> get(const std::string& key) const;
  friend bool operator==(const OutputMeta&, const OutputMeta&) = default;
};

// "# version=1 seed=.. config_hash=.. tool_version=.. k=v". Values hold no
// whitespace.
std::string meta_line(const OutputMeta& meta);
// Parses a meta line; a version other than kFormatVersion throws VersionError.
OutputMeta parse_meta_line(std::string_view line);
nlohmann::json meta_json(const OutputMeta& meta);
OutputMeta meta_from_json(const nlohmann::json& j);

// ---- probe datasets

struct DatasetManifest {
  std::string name;
  std::vector<std::string> languages;  // sorted
  std::vector<std::string> relations;  // sorted
  std::map<std::string, std::map<std::string, int>> counts;  // lang -> relation -> queries
  int version = kFormatVersion;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

DatasetManifest compute_manifest(const std::string& name, const std::vector<ProbeQuery>& queries);

struct ProbeDataset {
  std::vector<ProbeQuery> queries;
  DatasetManifest manifest;
};

// JSONL records {"lang","relation","template","subject","object","uuid"},
// NFC-normalized. Every malformed line is reported, with its 1-based line
// number, in one ValidationError. An empty file is rejected with "no records".
// The manifest is named after the file stem.
ProbeDataset load_probe_dataset(const std::filesystem::path& path);
void save_probe_dataset(const std::filesystem::path& path, const std::vector<ProbeQuery>& queries,
                        const OutputMeta& meta);
// With meta, the file also carries a top-level "meta" object.
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest,
                   const std::optional<OutputMeta>& meta = std::nullopt);
DatasetManifest load_manifest(const std::filesystem::path& path);

// ---- corpora

struct CorpusLine {
  std::string lang;
  std::string text;
  std::vector<TokenId> token_ids;  // without [BOS]

  friend bool operator==(const CorpusLine&, const CorpusLine&) = default;
};

// {"lang","text","token_ids"}. Token ids must equal vocab.encode(text) when a
// vocabulary is given.
std::vector<CorpusLine> load_corpus(const std::filesystem::path& path, const Vocabulary* vocab = nullptr);
void save_corpus(const std::filesystem::path& path, const std::vector<CorpusLine>& lines, const OutputMeta& meta);
std::vector<CorpusLine> corpus_lines(const std::vector<Sentence>& sentences);

struct ParallelCorpus {
  std::vector<std::pair<std::vector<TokenId>, std::vector<TokenId>>> pairs;  // model inputs with [BOS]
  std::size_t filtered = 0;  // pairs dropped by the length filter
};

// Line-aligned plain-text files. A pair survives when both sides have
// 3 <= model-input tokens (including [BOS]) <= max_seq_len. Unequal line
// counts throw AlignmentError.
ParallelCorpus load_parallel_corpus(const std::filesystem::path& path_a, const std::filesystem::path& path_b,
                                    const Vocabulary& vocab, int max_seq_len);

// ---- language meta

// {"lang","family","resource","wiki_articles"}; each record is validated
// against the thresholds.
std::map<std::string, LanguageMeta> load_language_meta(const std::filesystem::path& path,
                                                       const ResourceThresholds& thresholds = {});
void save_language_meta(const std::filesystem::path& path, const std::vector<LanguageMeta>& metas,
                        const OutputMeta& meta);

// ---- reports

// Results JSONL: {"uuid","gold_rank","correct","lirp","lsrp"}.
void save_results(const std::filesystem::path& path, const std::vector<ProbeResult>& results,
                  const OutputMeta& meta);
std::vector<ProbeResult> load_results(const std::filesystem::path& path);

struct ProbeMetrics {
  std::string lang;
  std::string pivot;
  std::optional<int> lirp;
  std::optional<int> lsrp;
  double accuracy = 0.0;
  double transferability = 0.0;
  std::map<std::string, double> relation_transferability;

  friend bool operator==(const ProbeMetrics&, const ProbeMetrics&) = default;
};

void save_probe_metrics(const std::filesystem::path& path, const ProbeMetrics& metrics, const OutputMeta& meta);
ProbeMetrics load_probe_metrics(const std::filesystem::path& path);

// Sweep JSONL: one {"lang","i","j","accuracy","transferability",
// "relation_transferability"} record per entry, baseline first with null i, j.
void save_sweep(const std::filesystem::path& path, const SweepResult& result, const OutputMeta& meta);
SweepResult load_sweep(const std::filesystem::path& path);

struct BestConfigRow {
  std::string lang;
  Criterion criterion = Criterion::transferability;
  BestConfig best;

  friend bool operator==(const BestConfigRow&, const BestConfigRow&) = default;
};

// CSV: gap,criterion,value for both criteria, gaps ascending.
void save_gap_curves(const std::filesystem::path& path, const SweepResult& result, const OutputMeta& meta);
std::map<Criterion, std::map<int, double>> load_gap_curves(const std::filesystem::path& path);

// CSV: lang,criterion,lirp_layer,lsrp_layer,value; the baseline has empty layers.
void save_best_configs(const std::filesystem::path& path, const std::vector<BestConfigRow>& rows,
                       const OutputMeta& meta);
std::vector<BestConfigRow> load_best_configs(const std::filesystem::path& path);

// CSV: model,config,group,accuracy,transferability; missing values are "n/a".
void save_grouped_report(const std::filesystem::path& path, const std::vector<GroupedReport>& reports,
                         const OutputMeta& meta);
std::vector<GroupedReport> load_grouped_report(const std::filesystem::path& path);
// JSON form of the same reports.
void save_grouped_report_json(const std::filesystem::path& path, const std::vector<GroupedReport>& reports,
                              const OutputMeta& meta);
std::vector<GroupedReport> load_grouped_report_json(const std::filesystem::path& path);

// CSV: relation,transferable_percent,languages.
void save_relation_report(const std::filesystem::path& path, const std::vector<RelationTransferRow>& rows,
                          const OutputMeta& meta);
std::vector<RelationTransferRow> load_relation_report(const std::filesystem::path& path);

// CSV: layer,value,config. The language pair travels in the meta line.
void save_curves(const std::filesystem::path& path, const std::vector<SpaceDistanceCurve>& curves,
                 const OutputMeta& meta);
std::vector<SpaceDistanceCurve> load_curves(const std::filesystem::path& path);

// {"lang","relation","k","per_layer":{"1":[...]}} plus version and meta.
void save_neuron_set(const std::filesystem::path& path, const KnowledgeNeuronSet& set, const OutputMeta& meta);
KnowledgeNeuronSet load_neuron_set(const std::filesystem::path& path);

// CSV: scope,config,same,different,avg. Scope "all" holds the pooled rates;
// scope "layer_<l>" holds the per-layer matched-relation rate in "same".
void save_overlap_report(const std::filesystem::path& path, const std::vector<OverlapReport>& reports,
                         const OutputMeta& meta);
std::vector<OverlapReport> load_overlap_report(const std::filesystem::path& path);

// Writes through a temporary sibling and renames, so readers never observe a
// partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace lrp2
