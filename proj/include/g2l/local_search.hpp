#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "g2l/multidilated.hpp"
#include "g2l/structure.hpp"
#include "g2l/tcn.hpp"

namespace g2l {

struct LocalSearchConfig {
  int iterations = 10;          // outer structure updates
  double window_fraction = 0.1; // half-width as a fraction of the center rate
  int sample_count = 3;         // S
  int epochs_per_update = 3;
  PmfKind pmf = PmfKind::AbsNormalize;
  std::uint64_t seed = 0;

  int total_epochs() const { return iterations * epochs_per_update; }
  void validate() const;
};

// Trainer context: dataset plus model/optimizer settings. The structure field
// of `tcn` and the epochs field of `train` are ignored (they come from the
// initial structure and the update cadence).
struct LocalSearchContext {
  const std::vector<FrameSequence>* train_set = nullptr;
  TcnConfig tcn;
  TrainingConfig train;
};

struct LocalSearchResult {
  DilationStructure structure;
  std::vector<DilationStructure> trajectory;  // iterations + 1, starting at the initial
  std::vector<double> loss_curve;             // one entry per trained epoch
};

// Snapshot at an outer-iteration boundary (after a collapse).
struct LocalSearchState {
  int next_iteration = 1;
  DilationStructure structure;
  std::vector<DilationStructure> trajectory;
  std::vector<double> loss_curve;
  std::string rng_state;
  TcnModel model;
  Optimizer velocity;
};

using LocalIterationCallback = std::function<void(const LocalSearchState&)>;

// Expectation-guided iterative refinement: per outer iteration, sample a
// window per layer, train the shared-kernel multi-dilated model for a few
// epochs, normalize branch weights into a PMF, and collapse each layer to the
// floored expected dilation. Kernels warm-start across iterations; branch
// weights reset to uniform when windows move.
LocalSearchResult run_local_search(const DilationStructure& initial, const LocalSearchConfig& cfg,
                                   const LocalSearchContext& ctx,
                                   const LocalIterationCallback& on_iteration = {},
                                   const LocalSearchState* resume = nullptr);

}  // namespace g2l
