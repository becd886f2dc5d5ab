#pragma once

// Typed cloze probing: every query of a relation is ranked against that
// relation's candidate objects, scored with the masked multi-mask protocol or
// the causal full-sentence protocol.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lrp2/engine.hpp"
#include "lrp2/vocab.hpp"

namespace lrp2 {

struct ProbeQuery {
  std::string lang;
  std::string relation;
  std::string template_text;  // holds exactly one "[X]" and one "[Y]"
  std::string subject;
  std::string object;  // gold surface form
  std::string uuid;

  friend bool operator==(const ProbeQuery&, const ProbeQuery&) = default;
};

// Throws ValidationError describing the first violated rule.
void validate_query(const ProbeQuery& query);

std::string render(const std::string& template_text, const std::string& subject,
                   const std::string& object_fill);

struct CandidatePool {
  std::string relation;
  std::vector<std::string> candidates;  // distinct gold objects, first-seen order
  std::optional<int> cap;
  std::uint64_t seed = 0;

  // Candidates ranked for one query. Without a cap this is the full pool;
  // with cap c it is the gold plus c-1 distractors drawn deterministically
  // from (seed, query uuid). The gold keeps its full-pool relative order.
  std::vector<std::string> for_query(const ProbeQuery& query) const;
};

// cap < 2 throws ConfigError. Masked probing uses no cap.
CandidatePool build_pool(const std::vector<ProbeQuery>& relation_queries, ModelMode mode,
                         std::optional<int> cap, std::uint64_t seed);

struct ProbeResult {
  std::string uuid;
  std::vector<double> scores;  // aligned with the ranked candidate list
  std::vector<int> ranks;      // rank of each candidate, a permutation of 1..|pool|
  int gold_rank = 0;
  bool correct = false;
  std::optional<int> lirp;
  std::optional<int> lsrp;
};

// Descending by score; ties by ascending candidate index. NaN -> ScoringError.
ProbeResult rank_candidates(const std::vector<double>& scores, std::size_t gold_index,
                            const std::vector<std::string>& candidate_names = {});

// Token ids fed to the model: [BOS] followed by the words of `text`.
std::vector<TokenId> model_input(const Vocabulary& vocab, const std::string& text);

// Mean log-probability of the candidate's t tokens at t mask positions.
double score_masked(const Model& model, const Vocabulary& vocab, const ProbeQuery& query,
                    const std::string& candidate, std::span<const Hook> hooks = {});

// Sum over positions 1..end of log P(token_p | tokens_<p) for the filled sentence.
double score_causal(const Model& model, const Vocabulary& vocab, const ProbeQuery& query,
                    const std::string& candidate, std::span<const Hook> hooks = {});

struct ProbeOptions {
  std::optional<int> pool_cap;
  std::uint64_t seed = 0;
  int jobs = 1;
};

// Probes every query, grouping pools by relation within `queries`.
std::vector<ProbeResult> probe(const Model& model, const Vocabulary& vocab,
                               const std::vector<ProbeQuery>& queries, std::span<const Hook> hooks,
                               const ProbeOptions& options);

}  // namespace lrp2
