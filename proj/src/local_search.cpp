#include "g2l/local_search.hpp"

#include <string>

#include "g2l/errors.hpp"

namespace g2l {

void LocalSearchConfig::validate() const {
  if (iterations < 0) throw ConfigError("local search: iterations must be >= 0");
  if (!(window_fraction > 0.0 && window_fraction < 1.0)) {
    throw ConfigError("local search: window fraction must lie in (0,1)");
  }
  if (sample_count < 2) throw ConfigError("local search: sample count must be >= 2");
  if (epochs_per_update < 1) throw ConfigError("local search: epochs per update must be >= 1");
}

LocalSearchResult run_local_search(const DilationStructure& initial, const LocalSearchConfig& cfg,
                                   const LocalSearchContext& ctx,
                                   const LocalIterationCallback& on_iteration,
                                   const LocalSearchState* resume) {
  cfg.validate();
  initial.validate();
  if (!ctx.train_set || ctx.train_set->empty()) {
    throw ConfigError("local search: trainer has no training data");
  }

  LocalSearchResult result;
  result.structure = initial;
  result.trajectory.push_back(initial);
  if (cfg.iterations == 0) return result;

  TcnConfig model_cfg = ctx.tcn;
  model_cfg.structure = initial;
  model_cfg.validate();
  TrainingConfig tcfg = ctx.train;
  tcfg.epochs = cfg.epochs_per_update;
  tcfg.validate();

  Rng rng(cfg.seed);
  TcnModel model;
  Optimizer opt;
  int first_iteration = 1;

  if (resume) {
    model = resume->model;
    opt = resume->velocity;
    rng.restore_hex(resume->rng_state);
    result.structure = resume->structure;
    result.trajectory = resume->trajectory;
    result.loss_curve = resume->loss_curve;
    first_iteration = resume->next_iteration;
  } else {
    std::vector<LocalWindow> windows;
    for (Dilation d : initial.flatten()) {
      windows.push_back(build_local_window(d, cfg.window_fraction, cfg.sample_count));
    }
    Rng init_rng(derive_seed(cfg.seed, "init"));
    model = build_search_model(model_cfg, windows, cfg.pmf, init_rng);
    opt = make_optimizer(model, tcfg);
  }

  for (int iter = first_iteration; iter <= cfg.iterations; ++iter) {
    // Re-center windows on the current structure; kernels warm-start, branch
    // weights and their momentum reset because the window contents moved.
    recenter_search_model(model, result.structure, cfg.window_fraction, cfg.sample_count);
    expand_optimizer(model, opt);
    opt.reset_branch_velocities(model);

    TrainResult tr;
    try {
      tr = train(model, *ctx.train_set, tcfg, opt, rng, cfg.epochs_per_update);
    } catch (const DivergenceError& e) {
      throw DivergenceError("local search iteration " + std::to_string(iter) + ": " + e.what());
    }
    result.loss_curve.insert(result.loss_curve.end(), tr.loss_curve.begin(), tr.loss_curve.end());

    // Collapse every layer to its floored expected dilation.
    DilationStructure updated = result.structure;
    std::size_t flat = 0;
    for (const auto& stage : model.stages) {
      for (const auto& block : stage.blocks) {
        std::vector<double> alpha;
        try {
          alpha = pmf_from_weights(block.branch_w, model.pmf);
        } catch (const DegenerateWeightsError&) {
          alpha.assign(block.branch_w.size(), 1.0 / static_cast<double>(block.branch_w.size()));
        }
        updated.flat(flat) = expected_dilation(block.window, alpha);
        ++flat;
      }
    }
    result.structure = updated;
    result.trajectory.push_back(updated);

    if (on_iteration) {
      LocalSearchState state;
      state.next_iteration = iter + 1;
      state.structure = result.structure;
      state.trajectory = result.trajectory;
      state.loss_curve = result.loss_curve;
      state.rng_state = rng.state_hex();
      state.model = model;
      state.velocity = opt;
      on_iteration(state);
    }
  }
  return result;
}

}  // namespace g2l
