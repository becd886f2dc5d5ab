#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "lrp2/errors.hpp"
#include "lrp2/intervention.hpp"
#include "lrp2/neurons.hpp"
#include "support/toy_world.hpp"

using namespace lrp2;

namespace {

AttributionConfig with_steps(int m) {
  AttributionConfig c;
  c.riemann_steps = m;
  return c;
}

struct Fixture {
  Corpus corpus = generate_world(reference_world_spec(), 2);
  Model64 model = cast_model<double>(init_random(testing::toy_model_config(corpus, 2, 8, 6), 21));
  ProbeQuery query = corpus.probes.front();
  AttributionPrompt prompt = attribution_prompt(model.config(), corpus.vocab, query);
};

// Full forward with the patch and no resume.
double full_patched(const Model64& model, const AttributionPrompt& prompt, NeuronCoord c, double a,
                    Hooks64 hooks = {}) {
  ForwardOptions<double> opts;
  opts.patch = NeuronPatch<double>{c.layer, c.index, prompt.position, a};
  return gold_probability(forward(model, prompt.input, hooks, opts), prompt);
}

KnowledgeNeuronSet kn(std::map<int, std::vector<int>> per_layer, int k = 3) {
  return {"xx", "P17", k, std::move(per_layer)};
}

}  // namespace

TEST_CASE("integrated gradient of zero activation is zero") {
  int calls = 0;
  const auto F = [&](double a) {
    ++calls;
    return a * a;
  };
  CHECK(integrated_gradient(F, 0.0, {}) == 0.0);
  CHECK(calls == 0);
}

TEST_CASE("integrated gradient is exact for affine paths") {
  for (double w : {-2.5, 0.3, 4.0}) {
    for (int m : {1, 7, 200}) {
      const double got = integrated_gradient([](double a) { return 3.0 * a - 1.25; }, w, with_steps(m));
      CHECK(std::abs(got - 3.0 * w) < 1e-8);
    }
  }
}

TEST_CASE("single-step attribution is one central difference at w") {
  const auto F = [](double a) { return std::sin(a) + a * a * a; };
  const double w = 0.8;
  const double h = 1e-3 * w;
  const double want = w * (F(w + h) - F(w - h)) / (2.0 * h);
  CHECK(integrated_gradient(F, w, with_steps(1)) == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("Riemann sum converges to the path integral") {
  const auto F = [](double a) { return std::tanh(2.0 * a) + 0.5 * a; };
  const double w = 1.7;
  const double delta = F(w) - F(0.0);
  const double coarse = std::abs(integrated_gradient(F, w, with_steps(10)) - delta);
  const double fine = std::abs(integrated_gradient(F, w, with_steps(200)) - delta);
  CHECK(fine < coarse);
  CHECK(fine <= 1e-2 * std::max(1.0, std::abs(delta)));
}

TEST_CASE("non-finite path values are reported") {
  const auto F = [](double a) { return a > 0.5 ? std::nan("") : a; };
  CHECK_THROWS_AS(integrated_gradient(F, 1.0, {}), NumericError);
  AttributionConfig bad;
  bad.riemann_steps = 0;
  CHECK_THROWS_AS(integrated_gradient(F, 1.0, bad), ConfigError);
}

TEST_CASE("masked attribution prompt patches the first mask") {
  Fixture f;
  const auto& c = f.model.config();
  const auto& p = f.prompt;
  REQUIRE(p.gold.size() == 1);
  CHECK(p.input[p.position] == c.mask_token_id);
  CHECK(p.gold.front().first == p.position);
  CHECK(p.gold.front().second == f.corpus.vocab.encode(f.query.object).front());
  CHECK(p.input.front() == f.corpus.vocab.bos_id());
}

TEST_CASE("causal attribution prompt ends with the gold tokens") {
  Fixture f;
  ModelConfig c = f.model.config();
  c.mode = ModelMode::causal;
  const auto p = attribution_prompt(c, f.corpus.vocab, f.query);
  const auto gold = f.corpus.vocab.encode(f.query.object);
  REQUIRE(p.gold.size() == gold.size());
  CHECK(p.input.back() == gold.back());
  CHECK(p.position + 1 + gold.size() == p.input.size());
  CHECK(p.gold.front().first == p.position);
}

TEST_CASE("patched probability at the natural activation is the unpatched probability") {
  Fixture f;
  const auto base = gold_probability(forward(f.model, f.prompt.input), f.prompt);
  for (NeuronCoord c : {NeuronCoord{1, 0}, NeuronCoord{2, 5}}) {
    const double w = natural_activation(f.model, f.prompt, c);
    CHECK(std::abs(patched_gold_probability(f.model, f.prompt, c, w) - base) < 1e-12);
  }
  CHECK_THROWS_AS(natural_activation(f.model, f.prompt, {3, 0}), InputError);
  CHECK_THROWS_AS(natural_activation(f.model, f.prompt, {1, 6}), InputError);
}

TEST_CASE("resumed patched forward equals a full patched forward") {
  Fixture f;
  std::vector<float> delta(8);
  for (std::size_t k = 0; k < delta.size(); ++k) delta[k] = 0.1f * static_cast<float>(k) - 0.3f;
  const std::vector<BasicHook<double>> hooks{make_shift_hook<double>(1, delta)};
  for (NeuronCoord c : {NeuronCoord{1, 2}, NeuronCoord{2, 3}}) {
    for (double a : {-1.0, 0.0, 0.7}) {
      CHECK(std::abs(patched_gold_probability(f.model, f.prompt, c, a, hooks) -
                     full_patched(f.model, f.prompt, c, a, hooks)) < 1e-12);
    }
  }
}

TEST_CASE("model attribution matches a hand-built path sum") {
  Fixture f;
  const auto cfg = with_steps(5);
  const NeuronCoord c{2, 1};
  const double w = natural_activation(f.model, f.prompt, c);
  REQUIRE(w != 0.0);
  const double h = cfg.gradient_step * std::abs(w);
  double sum = 0.0;
  for (int t = 1; t <= 5; ++t) {
    const double a = t / 5.0 * w;
    sum += (full_patched(f.model, f.prompt, c, a + h) - full_patched(f.model, f.prompt, c, a - h)) / (2.0 * h);
  }
  CHECK(std::abs(neuron_attribution(f.model, f.prompt, c, cfg) - w * sum / 5.0) < 1e-10);

  const auto all = prompt_attributions(f.model, f.prompt, cfg);
  REQUIRE(all.size() == 2);
  REQUIRE(all[1].size() == 6);
  CHECK(all[1][1] == neuron_attribution(f.model, f.prompt, c, cfg));
  CHECK(prompt_attributions(f.model, f.prompt, cfg, {}, 3) == all);
}

TEST_CASE("prompt neurons are per-layer top-k with index tie-break") {
  const std::vector<std::vector<double>> attr{{0.5, 2.0, 2.0, -1.0, 2.0}, {0.0, 0.0, 0.0, 0.0, 0.0}};
  const auto s = prompt_neurons(attr, 2);
  CHECK(s[0] == std::vector<int>{1, 2});
  CHECK(s[1] == std::vector<int>{0, 1});
  CHECK(prompt_neurons(attr, 9)[0] == std::vector<int>{0, 1, 2, 3, 4});
  CHECK_THROWS_AS(prompt_neurons({{1.0, std::nan("")}}, 1), NumericError);
  CHECK_THROWS_AS(prompt_neurons(attr, 0), ConfigError);
}

TEST_CASE("prompt and relation neurons agree with brute force") {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> coarse(-3, 3);
  for (int t = 0; t < 50; ++t) {
    const int k = 1 + static_cast<int>(rng() % 4);
    std::vector<LayerSets> prompts;
    for (int p = 0; p < 6; ++p) {
      std::vector<std::vector<double>> attr(3, std::vector<double>(8));
      for (auto& layer : attr)
        for (auto& v : layer) v = coarse(rng);
      const auto sets = prompt_neurons(attr, k);
      for (std::size_t l = 0; l < 3; ++l) {
        // Brute force: index x is chosen iff fewer than k entries outrank it.
        std::vector<int> want;
        for (int x = 0; x < 8; ++x) {
          int ahead = 0;
          for (int y = 0; y < 8; ++y) {
            if (attr[l][y] > attr[l][x] || (attr[l][y] == attr[l][x] && y < x)) ++ahead;
          }
          if (ahead < k) want.push_back(x);
        }
        CHECK(sets[l] == want);
      }
      prompts.push_back(sets);
    }
    const auto rel = relation_neurons("xx", "P17", prompts, k);
    CHECK(rel.per_layer.size() == 3);
    for (int l = 1; l <= 3; ++l) {
      std::vector<int> count(8, 0);
      for (const auto& p : prompts)
        for (int x : p[static_cast<std::size_t>(l - 1)]) ++count[static_cast<std::size_t>(x)];
      std::vector<int> want;
      for (int x = 0; x < 8; ++x) {
        int ahead = 0;
        for (int y = 0; y < 8; ++y) {
          if (count[y] > count[x] || (count[y] == count[x] && y < x)) ++ahead;
        }
        if (ahead < k && count[x] > 0) want.push_back(x);
      }
      CHECK(rel.per_layer.at(l) == want);
    }
  }
  CHECK_THROWS_AS(relation_neurons("xx", "P17", {}, 2), InputError);
}

TEST_CASE("overlap rate worked examples") {
  const auto a = kn({{1, {0, 1, 2}}, {2, {4, 5, 6}}});
  const auto b = kn({{1, {1, 2, 3}}, {2, {7, 8, 9}}});
  CHECK(overlap_rate(a, a) == 100.0);
  CHECK(overlap_rate(a, b) == doctest::Approx(100.0 * 2.0 / 10.0));
  CHECK(overlap_rate(a, b, 1) == doctest::Approx(50.0));
  CHECK(overlap_rate(a, b, 2) == 0.0);
  CHECK(overlap_rate(a, b, std::nullopt, OverlapFormula::over_k) == doctest::Approx(100.0 * 2.0 / 6.0));
  CHECK(overlap_rate(a, b, 1, OverlapFormula::over_k) == doctest::Approx(100.0 * 2.0 / 3.0));
  CHECK(overlap_rate(kn({}), kn({})) == 0.0);
  CHECK(overlap_rate(kn({{1, {}}}), kn({{1, {}}}), std::nullopt, OverlapFormula::iou) == 0.0);
  CHECK(parse_overlap_formula(to_string(OverlapFormula::over_k)) == OverlapFormula::over_k);
  CHECK_THROWS_AS(parse_overlap_formula("dice"), ConfigError);
}

TEST_CASE("overlap rate is symmetric and matches set brute force") {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 200; ++t) {
    std::map<int, std::vector<int>> pa, pb;
    std::set<std::pair<int, int>> sa, sb;
    for (int l = 1; l <= 3; ++l) {
      for (int x = 0; x < 10; ++x) {
        if (rng() % 3 == 0) {
          pa[l].push_back(x);
          sa.insert({l, x});
        }
        if (rng() % 3 == 0) {
          pb[l].push_back(x);
          sb.insert({l, x});
        }
      }
    }
    const auto a = kn(pa, 4);
    const auto b = kn(pb, 4);
    std::set<std::pair<int, int>> both, either;
    std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::inserter(both, both.end()));
    std::set_union(sa.begin(), sa.end(), sb.begin(), sb.end(), std::inserter(either, either.end()));
    const double want = either.empty() ? 0.0 : 100.0 * both.size() / either.size();
    CHECK(overlap_rate(a, b) == doctest::Approx(want));
    CHECK(overlap_rate(a, b) == overlap_rate(b, a));
    CHECK(overlap_rate(a, b) >= 0.0);
    CHECK(overlap_rate(a, b) <= 100.0);
  }
}

TEST_CASE("overlap report splits matched and unmatched relations") {
  std::map<std::string, KnowledgeNeuronSet> xx{{"P17", kn({{1, {0, 1}}, {2, {2}}})}, {"P19", kn({{1, {5}}, {2, {6}}})}};
  std::map<std::string, KnowledgeNeuronSet> en{{"P17", kn({{1, {0, 1}}, {2, {3}}})}, {"P19", kn({{1, {5}}, {2, {6}}})}};
  const auto r = overlap_report(xx, en, 2, "baseline");
  REQUIRE(r.same.has_value());
  CHECK(*r.same == doctest::Approx((50.0 + 100.0) / 2.0));
  CHECK(*r.different == 0.0);
  CHECK(*r.avg == doctest::Approx(150.0 / 4.0));
  REQUIRE(r.per_layer_same.size() == 2);
  CHECK(r.per_layer_same[0] == doctest::Approx(100.0));
  CHECK(r.per_layer_same[1] == doctest::Approx(50.0));

  std::map<std::string, KnowledgeNeuronSet> only{{"P37", kn({{1, {0}}})}};
  const auto none = overlap_report(only, en, 2, "1-2");
  CHECK_FALSE(none.same.has_value());
  CHECK(none.different.has_value());
  CHECK(none.per_layer_same.empty());
  const auto empty = overlap_report({}, {}, 2, "1-2");
  CHECK_FALSE(empty.avg.has_value());
}
