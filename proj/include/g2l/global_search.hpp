#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "g2l/rng.hpp"
#include "g2l/structure.hpp"

namespace g2l {

struct Candidate {
  DilationStructure structure;
  std::optional<double> fitness;
};

struct Population {
  std::vector<Candidate> candidates;
  std::size_t capacity = 0;

  double best_fitness() const;
  double mean_fitness() const;
};

struct GlobalSearchConfig {
  int iterations = 100;        // N
  int population_size = 50;    // M
  double mutation_prob = 0.2;  // p_m
  int eval_epochs = 5;         // n, forwarded to the fitness function
  std::uint64_t seed = 0;
  GlobalSearchSpace space;
  std::vector<std::size_t> shape;  // layers per stage
  int workers = 1;

  void validate() const;
};

// Deterministic fitness of a structure trained for `epochs` epochs, in
// [0, 100]. Throwing marks the candidate failed (fitness 0 + warning).
using FitnessFn = std::function<double(const DilationStructure&, int epochs)>;

struct HistoryRow {
  int iteration = 0;
  double best_fitness = 0.0;
  double mean_fitness = 0.0;
  DilationStructure best_structure;
};

// Snapshot at an iteration boundary; enough to resume bit-identically.
struct GlobalSearchState {
  int next_iteration = 1;
  Population population;
  std::string rng_state;
  std::vector<HistoryRow> history;
  std::uint64_t nominal_evals = 0;
};

struct GlobalSearchResult {
  Population population;            // sorted by fitness descending
  std::vector<HistoryRow> history;  // one row per iteration
  std::vector<std::string> warnings;
  std::uint64_t nominal_evals = 0;
};

// p_i = E(C_i) / sum_j E(C_j). Requires every candidate evaluated and at
// least one fitness > 0; throws DegenerateFitnessError when all are zero.
std::vector<double> selection_probabilities(const Population& pop);

// Exchanges the flat-index segment [lo, hi); parents untouched.
std::pair<DilationStructure, DilationStructure> crossover_at(const DilationStructure& a,
                                                             const DilationStructure& b,
                                                             std::size_t lo, std::size_t hi);

// Draws two anchors uniformly from [0, L] and exchanges the segment between
// them.
std::pair<DilationStructure, DilationStructure> crossover(const DilationStructure& a,
                                                          const DilationStructure& b, Rng& rng);

// With probability p_m replaces one uniformly chosen layer's dilation by a
// uniform draw from the space; otherwise returns the input unchanged.
DilationStructure mutate(const DilationStructure& s, double p_m, const GlobalSearchSpace& space,
                         Rng& rng);

// The m candidates with highest fitness, stable on ties.
Population select_top_m(const std::vector<Candidate>& candidates, std::size_t m);

using IterationCallback = std::function<void(const GlobalSearchState&)>;

// Genetic loop: fitness-proportional pair selection, two-anchor segment
// crossover, whole-individual gated mutation, truncation survival over the
// union of parents and offspring.
GlobalSearchResult run_global_search(const GlobalSearchConfig& cfg, const FitnessFn& evaluate,
                                     const IterationCallback& on_iteration = {},
                                     const GlobalSearchState* resume = nullptr);

// Same budget accounting and survival rule, but every new individual is a
// fresh uniform draw from the space.
GlobalSearchResult random_search_baseline(const GlobalSearchConfig& cfg, const FitnessFn& evaluate,
                                          const IterationCallback& on_iteration = {},
                                          const GlobalSearchState* resume = nullptr);

// population.ckpt payload (JSON text). Deserialization validates the config
// digest and throws DataError on corrupt or mismatched checkpoints.
std::string serialize_state(const GlobalSearchState& state, const GlobalSearchConfig& cfg);
GlobalSearchState deserialize_state(const std::string& text, const GlobalSearchConfig& cfg);

}  // namespace g2l
