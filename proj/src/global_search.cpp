#include "g2l/global_search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "g2l/errors.hpp"

namespace g2l {

double Population::best_fitness() const {
  double best = 0.0;
  bool any = false;
  for (const auto& c : candidates) {
    if (!c.fitness) continue;
    best = any ? std::max(best, *c.fitness) : *c.fitness;
    any = true;
  }
  if (!any) throw ConfigError("population: no evaluated candidates");
  return best;
}

double Population::mean_fitness() const {
  if (candidates.empty()) throw ConfigError("population: empty");
  double sum = 0.0;
  for (const auto& c : candidates) {
    if (!c.fitness) throw ConfigError("population: unevaluated candidate");
    sum += *c.fitness;
  }
  return sum / static_cast<double>(candidates.size());
}

void GlobalSearchConfig::validate() const {
  if (iterations < 1) throw ConfigError("global search: iterations must be >= 1");
  if (population_size < 2) throw ConfigError("global search: population size must be >= 2");
  if (mutation_prob < 0.0 || mutation_prob > 1.0) {
    throw ConfigError("global search: mutation probability must lie in [0,1]");
  }
  if (eval_epochs < 1) throw ConfigError("global search: eval epochs must be >= 1");
  if (space.dilations.empty()) throw ConfigError("global search: empty search space");
  if (shape.empty()) throw ConfigError("global search: empty structure shape");
  for (std::size_t n : shape) {
    if (n == 0) throw ConfigError("global search: every stage needs >= 1 layer");
  }
  if (workers < 1) throw ConfigError("global search: workers must be >= 1");
}

std::vector<double> selection_probabilities(const Population& pop) {
  if (pop.candidates.empty()) throw ConfigError("selection: empty population");
  double total = 0.0;
  for (const auto& c : pop.candidates) {
    if (!c.fitness) throw ConfigError("selection: unevaluated candidate");
    if (*c.fitness < 0.0 || !std::isfinite(*c.fitness)) {
      throw ConfigError("selection: fitness must be finite and >= 0");
    }
    total += *c.fitness;
  }
  if (total == 0.0) {
    throw DegenerateFitnessError("selection: all fitness values are exactly zero");
  }
  std::vector<double> probs;
  probs.reserve(pop.candidates.size());
  for (const auto& c : pop.candidates) probs.push_back(*c.fitness / total);
  return probs;
}

std::pair<DilationStructure, DilationStructure> crossover_at(const DilationStructure& a,
                                                             const DilationStructure& b,
                                                             std::size_t lo, std::size_t hi) {
  if (!a.same_shape(b)) throw ConfigError("crossover: parents have different shapes");
  const std::size_t L = a.layer_count();
  if (lo > hi || hi > L) throw ConfigError("crossover: anchors out of range");
  DilationStructure ca = a;
  DilationStructure cb = b;
  for (std::size_t i = lo; i < hi; ++i) std::swap(ca.flat(i), cb.flat(i));
  return {std::move(ca), std::move(cb)};
}

std::pair<DilationStructure, DilationStructure> crossover(const DilationStructure& a,
                                                          const DilationStructure& b, Rng& rng) {
  if (!a.same_shape(b)) throw ConfigError("crossover: parents have different shapes");
  const auto L = static_cast<std::int64_t>(a.layer_count());
  const auto anchor_a = static_cast<std::size_t>(rng.uniform_int(0, L));
  const auto anchor_b = static_cast<std::size_t>(rng.uniform_int(0, L));
  return crossover_at(a, b, std::min(anchor_a, anchor_b), std::max(anchor_a, anchor_b));
}

DilationStructure mutate(const DilationStructure& s, double p_m, const GlobalSearchSpace& space,
                         Rng& rng) {
  s.validate();
  if (p_m < 0.0 || p_m > 1.0) throw ConfigError("mutate: p_m must lie in [0,1]");
  if (space.dilations.empty()) throw ConfigError("mutate: empty search space");
  DilationStructure out = s;
  if (rng.uniform() < p_m) {
    const auto layer = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(s.layer_count()) - 1));
    const auto pick = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(space.dilations.size()) - 1));
    out.flat(layer) = space.dilations[pick];
  }
  return out;
}

Population select_top_m(const std::vector<Candidate>& candidates, std::size_t m) {
  if (candidates.size() < m) {
    throw ConfigError("select_top_m: underfull population (" + std::to_string(candidates.size()) +
                      " candidates for capacity " + std::to_string(m) + ")");
  }
  for (const auto& c : candidates) {
    if (!c.fitness) throw ConfigError("select_top_m: unevaluated candidate");
  }
  std::vector<std::size_t> order(candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return *candidates[x].fitness > *candidates[y].fitness;
  });
  Population pop;
  pop.capacity = m;
  pop.candidates.reserve(m);
  for (std::size_t i = 0; i < m; ++i) pop.candidates.push_back(candidates[order[i]]);
  return pop;
}

namespace {

std::size_t draw_index(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

// Evaluates the given structures with memoization keyed by the encoded text.
// Unique unevaluated structures run on a small worker pool; results are
// merged in input order so the outcome is independent of scheduling.
class FitnessCache {
 public:
  FitnessCache(const FitnessFn& fn, int epochs, int workers)
      : fn_(fn), epochs_(epochs), workers_(workers) {}

  void seed(const Population& pop) {
    for (const auto& c : pop.candidates) {
      if (c.fitness) cache_[encode_structure(c.structure)] = *c.fitness;
    }
  }

  std::vector<double> evaluate(const std::vector<DilationStructure>& structures,
                               std::vector<std::string>& warnings) {
    std::vector<std::string> keys;
    keys.reserve(structures.size());
    std::vector<std::size_t> todo;  // indices of first occurrences needing work
    for (std::size_t i = 0; i < structures.size(); ++i) {
      keys.push_back(encode_structure(structures[i]));
      if (!cache_.count(keys[i]) &&
          std::find(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(i), keys[i]) ==
              keys.begin() + static_cast<std::ptrdiff_t>(i)) {
        todo.push_back(i);
      }
    }

    std::vector<double> results(todo.size(), 0.0);
    std::vector<std::string> errors(todo.size());
    auto work = [&](std::size_t j) {
      try {
        results[j] = fn_(structures[todo[j]], epochs_);
      } catch (const std::exception& e) {
        results[j] = 0.0;
        errors[j] = e.what();
      }
    };
    if (workers_ <= 1 || todo.size() <= 1) {
      for (std::size_t j = 0; j < todo.size(); ++j) work(j);
    } else {
      const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(workers_), todo.size());
      std::vector<std::thread> pool;
      std::atomic<std::size_t> next{0};
      for (std::size_t w = 0; w < n_threads; ++w) {
        pool.emplace_back([&] {
          for (std::size_t j = next.fetch_add(1); j < todo.size(); j = next.fetch_add(1)) work(j);
        });
      }
      for (auto& t : pool) t.join();
    }
    for (std::size_t j = 0; j < todo.size(); ++j) {
      cache_[keys[todo[j]]] = results[j];
      if (!errors[j].empty()) {
        warnings.push_back("candidate " + keys[todo[j]] + ": fitness set to 0 (" + errors[j] + ")");
      }
    }

    std::vector<double> out(structures.size());
    for (std::size_t i = 0; i < structures.size(); ++i) out[i] = cache_.at(keys[i]);
    return out;
  }

 private:
  const FitnessFn& fn_;
  int epochs_;
  int workers_;
  std::unordered_map<std::string, double> cache_;
};

using OffspringFn = std::function<std::vector<DilationStructure>(const Population&, Rng&,
                                                                 std::vector<std::string>&)>;

GlobalSearchResult search_loop(const GlobalSearchConfig& cfg, const FitnessFn& evaluate,
                               const OffspringFn& make_offspring,
                               const IterationCallback& on_iteration,
                               const GlobalSearchState* resume) {
  cfg.validate();
  GlobalSearchResult result;
  FitnessCache cache(evaluate, cfg.eval_epochs, cfg.workers);

  Rng rng(cfg.seed);
  Population pop;
  std::vector<HistoryRow> history;
  int first_iteration = 1;
  std::uint64_t nominal_evals = 0;

  const auto M = static_cast<std::size_t>(cfg.population_size);
  if (resume) {
    pop = resume->population;
    history = resume->history;
    first_iteration = resume->next_iteration;
    nominal_evals = resume->nominal_evals;
    rng.restore_hex(resume->rng_state);
    cache.seed(pop);
  } else {
    std::vector<DilationStructure> initial;
    initial.reserve(M);
    for (std::size_t i = 0; i < M; ++i) initial.push_back(random_structure(cfg.space, cfg.shape, rng));
    const auto fitness = cache.evaluate(initial, result.warnings);
    nominal_evals += initial.size();
    pop.capacity = M;
    for (std::size_t i = 0; i < M; ++i) pop.candidates.push_back({initial[i], fitness[i]});
    if (on_iteration) {
      GlobalSearchState state{1, pop, rng.state_hex(), history, nominal_evals};
      on_iteration(state);
    }
  }

  for (int iter = first_iteration; iter <= cfg.iterations; ++iter) {
    const auto offspring_structures = make_offspring(pop, rng, result.warnings);
    const auto fitness = cache.evaluate(offspring_structures, result.warnings);
    nominal_evals += offspring_structures.size();

    std::vector<Candidate> pool = pop.candidates;
    for (std::size_t i = 0; i < offspring_structures.size(); ++i) {
      pool.push_back({offspring_structures[i], fitness[i]});
    }
    pop = select_top_m(pool, M);

    HistoryRow row;
    row.iteration = iter;
    row.best_fitness = pop.candidates.front().fitness.value();
    // select_top_m sorts descending, so front() is the best.
    row.mean_fitness = pop.mean_fitness();
    row.best_structure = pop.candidates.front().structure;
    history.push_back(row);

    if (on_iteration) {
      GlobalSearchState state{iter + 1, pop, rng.state_hex(), history, nominal_evals};
      on_iteration(state);
    }
  }

  result.population = pop;  // already sorted descending by select_top_m
  result.history = std::move(history);
  result.nominal_evals = nominal_evals;
  return result;
}

}  // namespace

GlobalSearchResult run_global_search(const GlobalSearchConfig& cfg, const FitnessFn& evaluate,
                                     const IterationCallback& on_iteration,
                                     const GlobalSearchState* resume) {
  auto make_offspring = [&cfg](const Population& pop, Rng& rng,
                               std::vector<std::string>& warnings) {
    std::vector<double> probs;
    try {
      probs = selection_probabilities(pop);
    } catch (const DegenerateFitnessError& e) {
      warnings.push_back(std::string(e.what()) + "; falling back to uniform selection");
      probs.assign(pop.candidates.size(), 1.0 / static_cast<double>(pop.candidates.size()));
    }
    std::vector<DilationStructure> offspring;
    const std::size_t pairs = static_cast<std::size_t>(cfg.population_size) / 2;
    offspring.reserve(2 * pairs);
    for (std::size_t p = 0; p < pairs; ++p) {
      const std::size_t ia = draw_index(probs, rng);
      const std::size_t ib = draw_index(probs, rng);
      auto [ca, cb] =
          crossover(pop.candidates[ia].structure, pop.candidates[ib].structure, rng);
      offspring.push_back(mutate(ca, cfg.mutation_prob, cfg.space, rng));
      offspring.push_back(mutate(cb, cfg.mutation_prob, cfg.space, rng));
    }
    return offspring;
  };
  return search_loop(cfg, evaluate, make_offspring, on_iteration, resume);
}

GlobalSearchResult random_search_baseline(const GlobalSearchConfig& cfg, const FitnessFn& evaluate,
                                          const IterationCallback& on_iteration,
                                          const GlobalSearchState* resume) {
  auto make_offspring = [&cfg](const Population&, Rng& rng, std::vector<std::string>&) {
    // Same per-iteration budget as the genetic loop's offspring count.
    const std::size_t count = 2 * (static_cast<std::size_t>(cfg.population_size) / 2);
    std::vector<DilationStructure> fresh;
    fresh.reserve(count);
    for (std::size_t i = 0; i < count; ++i) fresh.push_back(random_structure(cfg.space, cfg.shape, rng));
    return fresh;
  };
  return search_loop(cfg, evaluate, make_offspring, on_iteration, resume);
}

namespace {

std::string config_digest(const GlobalSearchConfig& cfg) {
  std::string text = std::to_string(cfg.iterations) + "/" + std::to_string(cfg.population_size) +
                     "/" + std::to_string(cfg.mutation_prob) + "/" +
                     std::to_string(cfg.eval_epochs) + "/" + std::to_string(cfg.seed) + "/" +
                     std::to_string(cfg.space.base) + "^" + std::to_string(cfg.space.max_exponent);
  for (std::size_t n : cfg.shape) text += ":" + std::to_string(n);
  return std::to_string(fnv1a64(text));
}

}  // namespace

std::string serialize_state(const GlobalSearchState& state, const GlobalSearchConfig& cfg) {
  nlohmann::json j;
  j["format"] = "G2LCKPT1";
  j["config_digest"] = config_digest(cfg);
  j["next_iteration"] = state.next_iteration;
  j["rng_state"] = state.rng_state;
  j["nominal_evals"] = state.nominal_evals;
  nlohmann::json pop = nlohmann::json::array();
  for (const auto& c : state.population.candidates) {
    pop.push_back({{"structure", encode_structure(c.structure)}, {"fitness", c.fitness.value()}});
  }
  j["population"] = pop;
  j["capacity"] = state.population.capacity;
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& row : state.history) {
    hist.push_back({{"iteration", row.iteration},
                    {"best_fitness", row.best_fitness},
                    {"mean_fitness", row.mean_fitness},
                    {"best_structure", encode_structure(row.best_structure)}});
  }
  j["history"] = hist;
  return j.dump(2);
}

GlobalSearchState deserialize_state(const std::string& text, const GlobalSearchConfig& cfg) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: malformed JSON: ") + e.what());
  }
  GlobalSearchState state;
  try {
    if (j.at("format").get<std::string>() != "G2LCKPT1") {
      throw DataError("checkpoint: unknown format tag");
    }
    if (j.at("config_digest").get<std::string>() != config_digest(cfg)) {
      throw DataError("checkpoint: config/seed does not match this run; refusing to resume");
    }
    state.next_iteration = j.at("next_iteration").get<int>();
    state.rng_state = j.at("rng_state").get<std::string>();
    state.nominal_evals = j.at("nominal_evals").get<std::uint64_t>();
    state.population.capacity = j.at("capacity").get<std::size_t>();
    for (const auto& c : j.at("population")) {
      Candidate cand;
      cand.structure = decode_structure(c.at("structure").get<std::string>());
      cand.fitness = c.at("fitness").get<double>();
      state.population.candidates.push_back(std::move(cand));
    }
    for (const auto& r : j.at("history")) {
      HistoryRow row;
      row.iteration = r.at("iteration").get<int>();
      row.best_fitness = r.at("best_fitness").get<double>();
      row.mean_fitness = r.at("mean_fitness").get<double>();
      row.best_structure = decode_structure(r.at("best_structure").get<std::string>());
      state.history.push_back(std::move(row));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: missing or mistyped field: ") + e.what());
  } catch (const ParseError& e) {
    throw DataError(std::string("checkpoint: bad structure text: ") + e.what());
  }
  return state;
}

}  // namespace g2l
