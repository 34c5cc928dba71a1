#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "g2l/errors.hpp"
#include "g2l/global_search.hpp"

using namespace g2l;

namespace {

Population make_pop(const std::vector<double>& fitness) {
  Population pop;
  pop.capacity = fitness.size();
  for (double f : fitness) {
    Candidate c;
    c.structure = decode_structure("1");
    c.fitness = f;
    pop.candidates.push_back(std::move(c));
  }
  return pop;
}

// Hidden-target toy landscape: 100 * (1 - hamming/L).
struct ToyOracle {
  DilationStructure target;

  double operator()(const DilationStructure& s, int) const {
    const auto a = s.flatten();
    const auto b = target.flatten();
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < a.size(); ++i) mismatches += a[i] != b[i];
    return 100.0 * (1.0 - static_cast<double>(mismatches) / static_cast<double>(a.size()));
  }
};

GlobalSearchConfig toy_config(std::uint64_t seed) {
  GlobalSearchConfig cfg;
  cfg.iterations = 100;
  cfg.population_size = 50;
  cfg.mutation_prob = 0.2;
  cfg.eval_epochs = 1;
  cfg.seed = seed;
  cfg.space = build_global_space(2, 10);
  cfg.shape = {10, 10, 10, 10};
  return cfg;
}

ToyOracle toy_oracle_for(const GlobalSearchConfig& cfg, std::uint64_t target_seed) {
  Rng rng(target_seed);
  return ToyOracle{random_structure(cfg.space, cfg.shape, rng)};
}

}  // namespace

TEST_CASE("selection probabilities follow fitness proportions") {
  CHECK(selection_probabilities(make_pop({10, 10, 10, 10})) ==
        std::vector<double>{0.25, 0.25, 0.25, 0.25});
  CHECK(selection_probabilities(make_pop({1, 3})) == std::vector<double>{0.25, 0.75});
  CHECK(selection_probabilities(make_pop({0, 0, 5})) == std::vector<double>{0, 0, 1});
  CHECK_THROWS_AS(selection_probabilities(make_pop({0, 0, 0})), DegenerateFitnessError);

  Population unevaluated = make_pop({1, 2});
  unevaluated.candidates[1].fitness.reset();
  CHECK_THROWS_AS(selection_probabilities(unevaluated), ConfigError);
}

TEST_CASE("property: selection probabilities form a distribution") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 30));
    std::vector<double> fitness(n);
    for (auto& f : fitness) f = rng.uniform() * 100.0;
    fitness[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1))] += 1.0;
    const auto probs = selection_probabilities(make_pop(fitness));
    double sum = 0.0;
    for (double p : probs) {
      CHECK(p >= 0.0);
      sum += p;
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("crossover_at exchanges the flat segment") {
  const auto a = decode_structure("1,2,4,8");
  const auto b = decode_structure("16,32,64,128");

  SUBCASE("full swap at anchors (0, L)") {
    const auto [ca, cb] = crossover_at(a, b, 0, 4);
    CHECK(ca == b);
    CHECK(cb == a);
  }
  SUBCASE("empty segment leaves parents intact") {
    const auto [ca, cb] = crossover_at(a, b, 2, 2);
    CHECK(ca == a);
    CHECK(cb == b);
  }
  SUBCASE("anchors (1, 3)") {
    const auto [ca, cb] = crossover_at(a, b, 1, 3);
    CHECK(ca == decode_structure("1,32,64,8"));
    CHECK(cb == decode_structure("16,2,4,128"));
  }
  SUBCASE("parents unmodified and cross-stage segments work") {
    const auto a2 = decode_structure("1,2|4,8");
    const auto b2 = decode_structure("16,32|64,128");
    const auto [ca, cb] = crossover_at(a2, b2, 1, 3);
    CHECK(ca == decode_structure("1,32|64,8"));
    CHECK(a2 == decode_structure("1,2|4,8"));
    CHECK(cb == decode_structure("16,2|4,128"));
  }
  SUBCASE("shape mismatch is rejected") {
    CHECK_THROWS_AS(crossover_at(a, decode_structure("1,2|4,8"), 0, 2), ConfigError);
    Rng rng(0);
    CHECK_THROWS_AS(crossover(a, decode_structure("1,2,4"), rng), ConfigError);
  }
}

TEST_CASE("property: crossover conserves the per-index multiset") {
  Rng rng(17);
  const auto space = build_global_space(2, 6);
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = random_structure(space, {4, 3}, rng);
    const auto b = random_structure(space, {4, 3}, rng);
    const auto [ca, cb] = crossover(a, b, rng);
    for (std::size_t i = 0; i < a.layer_count(); ++i) {
      const std::multiset<Dilation> parents = {a.flat(i), b.flat(i)};
      const std::multiset<Dilation> children = {ca.flat(i), cb.flat(i)};
      CHECK(parents == children);
    }
  }
}

TEST_CASE("mutation boundary behavior") {
  const auto space1 = build_global_space(2, 0);
  Rng rng(5);
  const auto s = decode_structure("2,2,2");

  SUBCASE("p_m = 0 never mutates") {
    for (int i = 0; i < 100; ++i) CHECK(mutate(s, 0.0, space1, rng) == s);
  }
  SUBCASE("p_m = 1 with a singleton space rewrites exactly one layer to 1") {
    for (int i = 0; i < 100; ++i) {
      const auto m = mutate(s, 1.0, space1, rng);
      std::size_t ones = 0, twos = 0;
      for (std::size_t l = 0; l < 3; ++l) {
        ones += m.flat(l) == 1;
        twos += m.flat(l) == 2;
      }
      CHECK(ones == 1);
      CHECK(twos == 2);
    }
  }
}

TEST_CASE("mutation rate matches p_m over 10000 seeded trials") {
  // |D_g| = 61 keeps the same-value redraw collision small against the
  // [0.18, 0.22] acceptance band.
  const auto space = build_global_space(2, 60);
  Rng rng(2025);
  const auto s = random_structure(space, {5}, rng);
  int changed = 0;
  const int trials = 10000;
  for (int i = 0; i < trials; ++i) {
    if (mutate(s, 0.2, space, rng) != s) ++changed;
  }
  const double fraction = static_cast<double>(changed) / trials;
  CHECK(fraction >= 0.18);
  CHECK(fraction <= 0.22);
}

TEST_CASE("select_top_m keeps the best and is stable on ties") {
  std::vector<Candidate> cands;
  const auto mk = [](const char* text, double f) {
    Candidate c;
    c.structure = decode_structure(text);
    c.fitness = f;
    return c;
  };
  cands = {mk("5", 5), mk("9", 9), mk("1", 1)};
  const auto top = select_top_m(cands, 2);
  CHECK(*top.candidates[0].fitness == 9);
  CHECK(*top.candidates[1].fitness == 5);

  cands = {mk("1", 7), mk("2", 7), mk("3", 7)};
  const auto ties = select_top_m(cands, 2);
  CHECK(ties.candidates[0].structure == decode_structure("1"));
  CHECK(ties.candidates[1].structure == decode_structure("2"));

  const auto all = select_top_m(cands, 3);
  CHECK(all.candidates.size() == 3);

  CHECK_THROWS_AS(select_top_m(cands, 4), ConfigError);
}

TEST_CASE("constant evaluator gives a constant population") {
  GlobalSearchConfig cfg;
  cfg.iterations = 1;
  cfg.population_size = 2;
  cfg.eval_epochs = 1;
  cfg.seed = 3;
  cfg.space = build_global_space(2, 3);
  cfg.shape = {4};
  const auto result = run_global_search(cfg, [](const DilationStructure&, int) { return 50.0; });
  REQUIRE(result.population.candidates.size() == 2);
  CHECK(*result.population.candidates[0].fitness == 50.0);
  CHECK(*result.population.candidates[1].fitness == 50.0);
  REQUIRE(result.history.size() == 1);
  CHECK(result.history[0].best_fitness == 50.0);
}

TEST_CASE("toy oracle: best fitness is monotonically non-decreasing") {
  const auto cfg = toy_config(11);
  const auto oracle = toy_oracle_for(cfg, 999);
  std::vector<std::size_t> pop_sizes;
  const auto result = run_global_search(
      cfg, oracle, [&](const GlobalSearchState& st) { pop_sizes.push_back(st.population.candidates.size()); });
  REQUIRE(result.history.size() == 100);
  for (std::size_t i = 1; i < result.history.size(); ++i) {
    CHECK(result.history[i].best_fitness >= result.history[i - 1].best_fitness);
  }
  for (std::size_t n : pop_sizes) CHECK(n == 50);
}

TEST_CASE("identical config and seed reproduce the history exactly") {
  const auto cfg = toy_config(21);
  const auto oracle = toy_oracle_for(cfg, 7);
  const auto a = run_global_search(cfg, oracle);
  const auto b = run_global_search(cfg, oracle);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].best_fitness == b.history[i].best_fitness);
    CHECK(a.history[i].mean_fitness == b.history[i].mean_fitness);
    CHECK(a.history[i].best_structure == b.history[i].best_structure);
  }
  CHECK(a.nominal_evals == b.nominal_evals);
}

TEST_CASE("genetic search beats random search on the toy landscape") {
  // Mirrors the faster-convergence comparison: evaluations needed to reach
  // fitness 95 under an equal nominal budget.
  int genetic_wins = 0;
  std::vector<double> genetic_final, random_final;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto cfg = toy_config(seed);
    const auto oracle = toy_oracle_for(cfg, seed * 131 + 5);
    const auto gen = run_global_search(cfg, oracle);
    const auto rnd = random_search_baseline(cfg, oracle);
    REQUIRE(rnd.history.size() == static_cast<std::size_t>(cfg.iterations));
    CHECK(gen.nominal_evals == rnd.nominal_evals);

    const auto evals_to_95 = [&](const GlobalSearchResult& r) {
      for (const auto& row : r.history) {
        if (row.best_fitness >= 95.0) {
          return static_cast<std::uint64_t>(cfg.population_size) *
                 (static_cast<std::uint64_t>(row.iteration) + 1);
        }
      }
      return std::numeric_limits<std::uint64_t>::max();
    };
    if (evals_to_95(gen) < evals_to_95(rnd)) ++genetic_wins;
    genetic_final.push_back(gen.history.back().best_fitness);
    random_final.push_back(rnd.history.back().best_fitness);
  }
  CHECK(genetic_wins >= 9);

  // Median of the random trajectory lies at or below the genetic one.
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  CHECK(median(random_final) <= median(genetic_final));
}

TEST_CASE("failing evaluator candidates get fitness 0 and a warning") {
  GlobalSearchConfig cfg;
  cfg.iterations = 2;
  cfg.population_size = 4;
  cfg.eval_epochs = 1;
  cfg.seed = 5;
  cfg.space = build_global_space(2, 2);
  cfg.shape = {3};
  int calls = 0;
  const auto result = run_global_search(cfg, [&calls](const DilationStructure&, int) -> double {
    if (++calls % 3 == 0) throw std::runtime_error("simulated trainer crash");
    return 10.0;
  });
  CHECK(!result.warnings.empty());
  CHECK(result.population.candidates.size() == 4);
  for (const auto& c : result.population.candidates) CHECK(c.fitness.has_value());
}

TEST_CASE("all-zero fitness falls back to uniform selection with a warning") {
  GlobalSearchConfig cfg;
  cfg.iterations = 2;
  cfg.population_size = 4;
  cfg.eval_epochs = 1;
  cfg.seed = 6;
  cfg.space = build_global_space(2, 2);
  cfg.shape = {3};
  const auto result = run_global_search(cfg, [](const DilationStructure&, int) { return 0.0; });
  CHECK(result.history.size() == 2);
  bool saw_fallback = false;
  for (const auto& w : result.warnings) {
    if (w.find("uniform") != std::string::npos) saw_fallback = true;
  }
  CHECK(saw_fallback);
}

TEST_CASE("random baseline mirrors budget accounting") {
  GlobalSearchConfig cfg;
  cfg.iterations = 1;
  cfg.population_size = 2;
  cfg.eval_epochs = 1;
  cfg.seed = 9;
  cfg.space = build_global_space(2, 3);
  cfg.shape = {4};
  const auto result =
      random_search_baseline(cfg, [](const DilationStructure&, int) { return 42.0; });
  CHECK(result.population.candidates.size() == 2);
  CHECK(*result.population.candidates[0].fitness == 42.0);
  CHECK(result.history.size() == 1);
  CHECK(result.nominal_evals == 4);  // 2 initial + 2 fresh
}

TEST_CASE("checkpoint state round trips and resumes identically") {
  auto cfg = toy_config(33);
  cfg.iterations = 12;
  const auto oracle = toy_oracle_for(cfg, 17);

  std::map<int, GlobalSearchState> snapshots;
  const auto full = run_global_search(
      cfg, oracle, [&](const GlobalSearchState& st) { snapshots[st.next_iteration] = st; });

  // Serialize/deserialize the snapshot taken after iteration 5.
  REQUIRE(snapshots.count(6));
  const std::string text = serialize_state(snapshots[6], cfg);
  const GlobalSearchState restored = deserialize_state(text, cfg);
  CHECK(restored.next_iteration == 6);
  CHECK(restored.rng_state == snapshots[6].rng_state);
  CHECK(restored.history.size() == snapshots[6].history.size());

  const auto resumed = run_global_search(cfg, oracle, {}, &restored);
  REQUIRE(resumed.history.size() == full.history.size());
  for (std::size_t i = 0; i < full.history.size(); ++i) {
    CHECK(resumed.history[i].best_fitness == full.history[i].best_fitness);
    CHECK(resumed.history[i].mean_fitness == full.history[i].mean_fitness);
    CHECK(resumed.history[i].best_structure == full.history[i].best_structure);
  }

  // Tampered payloads are rejected.
  CHECK_THROWS_AS(deserialize_state("{]", cfg), DataError);
  CHECK_THROWS_AS(deserialize_state("{}", cfg), DataError);
  auto other = cfg;
  other.seed += 1;
  CHECK_THROWS_AS(deserialize_state(text, other), DataError);
}

TEST_CASE("worker pool does not change results") {
  auto cfg = toy_config(44);
  cfg.iterations = 10;
  const auto oracle = toy_oracle_for(cfg, 3);
  auto serial_cfg = cfg;
  serial_cfg.workers = 1;
  auto parallel_cfg = cfg;
  parallel_cfg.workers = 4;
  const auto serial = run_global_search(serial_cfg, oracle);
  const auto parallel = run_global_search(parallel_cfg, oracle);
  REQUIRE(serial.history.size() == parallel.history.size());
  for (std::size_t i = 0; i < serial.history.size(); ++i) {
    CHECK(serial.history[i].best_fitness == parallel.history[i].best_fitness);
    CHECK(serial.history[i].best_structure == parallel.history[i].best_structure);
  }
}
