#include <doctest.h>

#include <random>

#include "lrp2/errors.hpp"
#include "lrp2/intervention.hpp"
#include "lrp2/sweep.hpp"
#include "support/temp_dir.hpp"
#include "support/toy_world.hpp"

using namespace lrp2;

namespace {

struct Fixture {
  Corpus corpus = generate_world(reference_world_spec(), 3);
  Model model = init_random(testing::toy_model_config(corpus, 4, 16, 32), 11);
  testing::ToySetup setup;

  Fixture() { testing::build_toy_setup(setup, model, corpus); }
};

SweepEntry entry(int i, int j, double acc, double trans) { return {i, j, acc, trans, {}}; }

// Argmax with ties to the lexicographically smallest (i, j); baseline is (0, 0).
BestConfig brute_best(const SweepResult& r, Criterion c) {
  std::vector<const SweepEntry*> all{&r.baseline};
  for (const auto& e : r.entries) all.push_back(&e);
  double best = -1.0;
  for (const auto* e : all) best = std::max(best, criterion_value(*e, c));
  std::pair<int, int> arg{1 << 30, 1 << 30};
  for (const auto* e : all)
    if (criterion_value(*e, c) == best) arg = std::min(arg, std::pair{e->i, e->j});
  return {arg.first, arg.second, best, arg == std::pair{0, 0}};
}

}  // namespace

TEST_CASE("full grid has L(L-1)/2 ordered pairs") {
  for (int L = 1; L <= 12; ++L) {
    const auto g = full_grid(L);
    CHECK(g.size() == static_cast<std::size_t>(L * (L - 1) / 2));
    for (std::size_t k = 0; k < g.size(); ++k) {
      CHECK(1 <= g[k].first);
      CHECK(g[k].first < g[k].second);
      CHECK(g[k].second <= L);
      if (k > 0) CHECK(g[k - 1] < g[k]);
    }
  }
  CHECK(full_grid(4) == std::vector<std::pair<int, int>>{{1, 2}, {1, 3}, {1, 4}, {2, 3}, {2, 4}, {3, 4}});
}

TEST_CASE("sweep entries match independent per-config probing") {
  Fixture f;
  const auto& in = f.setup.inputs;
  const auto r = run_sweep(in);
  REQUIRE(r.entries.size() == 6);
  CHECK(r.baseline.is_baseline());
  CHECK(r.lang == "xx");

  UuidSet pivot_correct;
  for (const auto& p : probe(f.model, f.corpus.vocab, in.pivot_queries, {}, {}))
    if (p.correct) pivot_correct.insert(p.uuid);
  std::size_t k = 0;
  for (const auto& [i, j] : full_grid(4)) {
    CAPTURE(i);
    CAPTURE(j);
    const auto& e = r.entries[k++];
    CHECK(e.i == i);
    CHECK(e.j == j);
    const auto hooks = make_hooks({"xx", "en", i, j, in.lang_vectors, in.pivot_vectors}, f.model.config());
    const auto results = probe(f.model, f.corpus.vocab, in.queries, hooks, {});
    UuidSet correct;
    for (const auto& p : results)
      if (p.correct) correct.insert(p.uuid);
    CHECK(e.accuracy == 100.0 * static_cast<double>(correct.size()) / static_cast<double>(results.size()));
    CHECK(e.transferability == transferability(correct, pivot_correct));
  }
}

TEST_CASE("singleton grid and jobs independence") {
  Fixture f;
  auto in = f.setup.inputs;
  const auto one = run_sweep(in, std::vector<std::pair<int, int>>{{2, 3}});
  REQUIRE(one.entries.size() == 1);
  CHECK(one.entries[0].i == 2);
  CHECK(one.entries[0].j == 3);
  const auto serial = run_sweep(in);
  in.jobs = 3;
  CHECK(run_sweep(in) == serial);
  CHECK(one.entries[0] == serial.entries[3]);
}

TEST_CASE("equal language vectors reproduce the baseline") {
  Fixture f;
  auto in = f.setup.inputs;
  in.lang_vectors = in.pivot_vectors;
  const auto r = run_sweep(in);
  for (const auto& e : r.entries) {
    CHECK(e.accuracy == r.baseline.accuracy);
    CHECK(e.transferability == r.baseline.transferability);
  }
  CHECK(select_best(r, Criterion::transferability).baseline);
}

TEST_CASE("invalid grids are refused") {
  Fixture f;
  const auto& in = f.setup.inputs;
  using Grid = std::vector<std::pair<int, int>>;
  CHECK_THROWS_AS(run_sweep(in, Grid{{2, 2}}), ConfigError);
  CHECK_THROWS_AS(run_sweep(in, Grid{{0, 2}}), ConfigError);
  CHECK_THROWS_AS(run_sweep(in, Grid{{1, 5}}), ConfigError);
  CHECK_THROWS_AS(run_sweep(in, Grid{{1, 2}, {1, 2}}), ConfigError);
  auto missing = in;
  missing.pivot_vectors = nullptr;
  CHECK_THROWS_AS(run_sweep(missing), ConfigError);
}

TEST_CASE("cached sweep resumes and ignores stale entries") {
  Fixture f;
  const auto& in = f.setup.inputs;
  testing::TempDir dir;
  const auto fresh = run_sweep(in, std::nullopt, dir.path());
  CHECK(std::filesystem::exists(dir.path() / "xx_1_2.json"));
  CHECK(std::filesystem::exists(dir.path() / "xx_0_0.json"));
  CHECK(run_sweep(in, std::nullopt, dir.path()) == fresh);

  // A truncated file, as left by an interrupted write, is recomputed.
  testing::write_bytes(dir.path() / "xx_2_4.json", "{\"key\":");
  std::filesystem::remove(dir.path() / "xx_3_4.json");
  CHECK(run_sweep(in, std::nullopt, dir.path()) == fresh);

  // Entries keyed to other inputs are not reused.
  auto other = in;
  other.queries.pop_back();
  const auto changed = run_sweep(other, std::nullopt, dir.path());
  CHECK(changed == run_sweep(other));
}

TEST_CASE("select_best worked example with baseline tie") {
  SweepResult r{"xx", entry(0, 0, 40.0, 30.0), {entry(1, 2, 40.0, 31.0), entry(1, 3, 45.0, 31.0)}};
  CHECK(select_best(r, Criterion::accuracy) == BestConfig{1, 3, 45.0, false});
  CHECK(select_best(r, Criterion::transferability) == BestConfig{1, 2, 31.0, false});
  CHECK(best_configs_disagree(r));
  r.entries[1].accuracy = 40.0;
  CHECK(select_best(r, Criterion::accuracy) == BestConfig{0, 0, 40.0, true});
}

TEST_CASE("select_best and gap curve agree with brute force") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> layers(2, 8);
  std::uniform_int_distribution<int> value(0, 6);  // coarse values force ties
  for (int t = 0; t < 100; ++t) {
    const int L = layers(rng);
    SweepResult r{"xx", entry(0, 0, value(rng) * 5.0, value(rng) * 5.0), {}};
    for (const auto& [i, j] : full_grid(L)) r.entries.push_back(entry(i, j, value(rng) * 5.0, value(rng) * 5.0));
    for (Criterion c : {Criterion::accuracy, Criterion::transferability}) {
      CHECK(select_best(r, c) == brute_best(r, c));
      const auto curve = gap_curve(r, c);
      CHECK(curve.size() == static_cast<std::size_t>(L - 1));
      for (int g = 1; g < L; ++g) {
        double want = -1.0;
        for (const auto& e : r.entries)
          if (e.j - e.i == g) want = std::max(want, criterion_value(e, c));
        CHECK(curve.at(g) == want);
      }
      double curve_max = -1.0;
      for (const auto& [g, v] : curve) curve_max = std::max(curve_max, v);
      const auto best = select_best(r, c);
      if (!best.baseline) {
        CHECK(curve_max == best.value);
        CHECK(curve.at(best.j - best.i) == best.value);
      }
    }
  }
}

TEST_CASE("criterion names round trip") {
  CHECK(parse_criterion(to_string(Criterion::accuracy)) == Criterion::accuracy);
  CHECK(parse_criterion("transferability") == Criterion::transferability);
  CHECK_THROWS_AS(parse_criterion("f1"), ConfigError);
}
