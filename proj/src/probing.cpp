#include "lrp2/probing.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "lrp2/errors.hpp"
#include "lrp2/util.hpp"

namespace lrp2 {

namespace {

std::size_t count_of(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = text.find(needle); p != std::string::npos; p = text.find(needle, p + needle.size())) ++n;
  return n;
}

void replace_all(std::string& text, const std::string& from, const std::string& to) {
  for (auto p = text.find(from); p != std::string::npos; p = text.find(from, p + to.size())) {
    text.replace(p, from.size(), to);
  }
}

void require_mode(const Model& model, ModelMode mode, const char* what) {
  if (model.config().mode != mode) {
    throw ConfigError(std::string(what) + " requires a " + to_string(mode) + " model");
  }
}

std::string mask_fill(std::size_t t) {
  std::string fill;
  for (std::size_t i = 0; i < t; ++i) {
    if (i) fill += ' ';
    fill += kMaskToken;
  }
  return fill;
}

// Log-probabilities at every mask position of the template rendered with t masks.
std::vector<std::vector<double>> masked_logprobs(const Model& model, const Vocabulary& vocab,
                                                 const ProbeQuery& query, std::size_t t,
                                                 std::span<const Hook> hooks) {
  const auto input = model_input(vocab, render(query.template_text, query.subject, mask_fill(t)));
  const auto trace = forward(model, input, hooks);
  std::vector<std::vector<double>> rows;
  for (std::size_t p = 0; p < input.size(); ++p) {
    if (input[p] == model.config().mask_token_id) rows.push_back(token_logprobs(trace, p));
  }
  if (rows.size() != t) {
    throw InputError("query " + query.uuid + ": expected " + std::to_string(t) +
                     " mask positions, found " + std::to_string(rows.size()));
  }
  return rows;
}

double mean_candidate_logprob(const std::vector<std::vector<double>>& rows,
                              const std::vector<TokenId>& ids) {
  double sum = 0.0;
  for (std::size_t k = 0; k < ids.size(); ++k) sum += rows[k][static_cast<std::size_t>(ids[k])];
  return sum / static_cast<double>(ids.size());
}

std::vector<TokenId> candidate_tokens(const Vocabulary& vocab, const std::string& candidate) {
  auto ids = vocab.encode(candidate);
  if (ids.empty()) throw InputError("candidate '" + candidate + "' tokenizes to zero tokens");
  return ids;
}

}  // namespace

void validate_query(const ProbeQuery& q) {
  if (count_of(q.template_text, "[X]") != 1) throw ValidationError("template must hold exactly one [X]");
  if (count_of(q.template_text, "[Y]") != 1) throw ValidationError("template must hold exactly one [Y]");
  if (q.object.empty()) throw ValidationError("gold object is empty");
  if (q.subject.empty()) throw ValidationError("subject is empty");
  if (q.lang.empty() || q.relation.empty() || q.uuid.empty()) {
    throw ValidationError("lang, relation and uuid must be non-empty");
  }
}

std::string render(const std::string& template_text, const std::string& subject,
                   const std::string& object_fill) {
  std::string out = template_text;
  replace_all(out, "[X]", subject);
  replace_all(out, "[Y]", object_fill);
  return out;
}

std::vector<TokenId> model_input(const Vocabulary& vocab, const std::string& text) {
  std::vector<TokenId> ids{vocab.bos_id()};
  const auto words = vocab.encode(text);
  ids.insert(ids.end(), words.begin(), words.end());
  return ids;
}

CandidatePool build_pool(const std::vector<ProbeQuery>& relation_queries, ModelMode mode,
                         std::optional<int> cap, std::uint64_t seed) {
  if (relation_queries.empty()) throw InputError("candidate pool needs at least one query");
  if (cap && *cap < 2) throw ConfigError("pool cap must be >= 2, got " + std::to_string(*cap));
  CandidatePool pool;
  pool.relation = relation_queries.front().relation;
  pool.seed = seed;
  pool.cap = mode == ModelMode::causal ? cap : std::nullopt;
  std::set<std::string> seen;
  for (const auto& q : relation_queries) {
    if (q.relation != pool.relation) {
      throw InputError("pool for " + pool.relation + " received a query of relation " + q.relation);
    }
    if (seen.insert(q.object).second) pool.candidates.push_back(q.object);
  }
  return pool;
}

std::vector<std::string> CandidatePool::for_query(const ProbeQuery& query) const {
  const auto gold = std::find(candidates.begin(), candidates.end(), query.object);
  if (gold == candidates.end()) {
    throw InputError("gold object '" + query.object + "' missing from the pool of " + relation);
  }
  if (!cap || candidates.size() <= static_cast<std::size_t>(*cap)) return candidates;

  const auto gold_index = static_cast<std::size_t>(gold - candidates.begin());
  std::vector<std::size_t> distractors;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (i != gold_index) distractors.push_back(i);
  std::mt19937_64 rng(fnv1a64(query.uuid, seed ^ 0x5bd1e995ULL));
  const auto want = static_cast<std::size_t>(*cap) - 1;
  // Partial Fisher-Yates: the first `want` slots become the sample.
  for (std::size_t i = 0; i < want; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (distractors.size() - i));
    std::swap(distractors[i], distractors[j]);
  }
  std::vector<std::size_t> chosen(distractors.begin(), distractors.begin() + static_cast<std::ptrdiff_t>(want));
  chosen.push_back(gold_index);
  std::sort(chosen.begin(), chosen.end());
  std::vector<std::string> out;
  for (auto i : chosen) out.push_back(candidates[i]);
  return out;
}

ProbeResult rank_candidates(const std::vector<double>& scores, std::size_t gold_index,
                            const std::vector<std::string>& candidate_names) {
  if (gold_index >= scores.size()) throw InputError("gold index outside the scored pool");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) {
      const std::string name = i < candidate_names.size() ? candidate_names[i] : "#" + std::to_string(i);
      throw ScoringError("non-finite score for candidate '" + name + "'");
    }
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  ProbeResult r;
  r.scores = scores;
  r.ranks.assign(scores.size(), 0);
  for (std::size_t pos = 0; pos < order.size(); ++pos) r.ranks[order[pos]] = static_cast<int>(pos + 1);
  r.gold_rank = r.ranks[gold_index];
  r.correct = r.gold_rank == 1;
  return r;
}

double score_masked(const Model& model, const Vocabulary& vocab, const ProbeQuery& query,
                    const std::string& candidate, std::span<const Hook> hooks) {
  require_mode(model, ModelMode::masked, "masked scoring");
  const auto ids = candidate_tokens(vocab, candidate);
  return mean_candidate_logprob(masked_logprobs(model, vocab, query, ids.size(), hooks), ids);
}

double score_causal(const Model& model, const Vocabulary& vocab, const ProbeQuery& query,
                    const std::string& candidate, std::span<const Hook> hooks) {
  require_mode(model, ModelMode::causal, "causal scoring");
  candidate_tokens(vocab, candidate);
  const auto input = model_input(vocab, render(query.template_text, query.subject, candidate));
  if (input.size() > static_cast<std::size_t>(model.config().max_seq_len)) {
    throw InputError("query " + query.uuid + ": filled sentence has " + std::to_string(input.size()) +
                     " tokens, above max_seq_len");
  }
  const auto trace = forward(model, input, hooks);
  double sum = 0.0;
  for (std::size_t p = 1; p < input.size(); ++p) {
    sum += token_logprobs(trace, p - 1)[static_cast<std::size_t>(input[p])];
  }
  return sum;
}

std::vector<ProbeResult> probe(const Model& model, const Vocabulary& vocab,
                               const std::vector<ProbeQuery>& queries, std::span<const Hook> hooks,
                               const ProbeOptions& options) {
  const ModelMode mode = model.config().mode;
  std::map<std::pair<std::string, std::string>, std::vector<ProbeQuery>> groups;
  for (const auto& q : queries) {
    validate_query(q);
    groups[{q.lang, q.relation}].push_back(q);
  }
  std::map<std::pair<std::string, std::string>, CandidatePool> pools;
  for (const auto& [key, group] : groups) {
    pools.emplace(key, build_pool(group, mode, options.pool_cap, options.seed));
  }

  std::vector<ProbeResult> results(queries.size());
  parallel_for(queries.size(), options.jobs, [&](std::size_t qi) {
    const ProbeQuery& q = queries[qi];
    const auto candidates = pools.at({q.lang, q.relation}).for_query(q);
    std::vector<double> scores(candidates.size());
    if (mode == ModelMode::masked) {
      // Candidates with equal token length share one forward pass.
      std::map<std::size_t, std::vector<std::vector<double>>> by_length;
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        const auto ids = candidate_tokens(vocab, candidates[c]);
        auto it = by_length.find(ids.size());
        if (it == by_length.end()) {
          it = by_length.emplace(ids.size(), masked_logprobs(model, vocab, q, ids.size(), hooks)).first;
        }
        scores[c] = mean_candidate_logprob(it->second, ids);
      }
    } else {
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        scores[c] = score_causal(model, vocab, q, candidates[c], hooks);
      }
    }
    const auto gold = static_cast<std::size_t>(
        std::find(candidates.begin(), candidates.end(), q.object) - candidates.begin());
    ProbeResult r = rank_candidates(scores, gold, candidates);
    r.uuid = q.uuid;
    results[qi] = std::move(r);
  });
  return results;
}

}  // namespace lrp2
