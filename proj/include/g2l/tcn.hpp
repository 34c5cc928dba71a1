#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "g2l/data.hpp"
#include "g2l/matrix.hpp"
#include "g2l/multidilated.hpp"
#include "g2l/rng.hpp"
#include "g2l/structure.hpp"

namespace g2l {

struct TcnConfig {
  std::size_t in_features = 0;  // F
  std::size_t hidden = 16;      // H
  std::size_t num_classes = 0;  // K
  std::size_t kernel = 3;       // odd
  DilationStructure structure;

  void validate() const;
};

struct TrainingConfig {
  int epochs = 30;
  double lr = 0.05;
  double momentum = 0.9;
  int batch_size = 4;
  double smoothing_lambda = 0.15;  // weight of the truncated-MSE smoothing term
  double smoothing_clip = 16.0;    // truncation threshold in log-prob space
  std::uint64_t seed = 0;

  void validate() const;
};

// One residual block: dilated conv -> ReLU -> 1x1 conv -> residual add.
// A plain layer is a single-entry window with empty branch_w. Search-mode
// blocks carry a sampled window and the learned branch importance weights of
// the shared-kernel multi-dilated layer.
struct DilatedBlock {
  LocalWindow window;
  std::vector<double> conv_w, conv_b;  // H*H*kernel, H
  std::vector<double> pw_w, pw_b;      // H*H, H
  std::vector<double> branch_w;        // S, empty for plain layers

  bool is_search_block() const { return !branch_w.empty(); }
};

struct TcnStage {
  std::vector<double> in_w, in_b;    // H x C_in projection
  std::vector<double> out_w, out_b;  // K x H classifier
  std::vector<DilatedBlock> blocks;
};

struct TcnModel {
  TcnConfig cfg;
  PmfKind pmf = PmfKind::AbsNormalize;
  std::vector<TcnStage> stages;

  std::size_t parameter_count() const;

  // Visits every parameter tensor in a fixed order. When
  // `include_branch_weights` is false the branch importance weights are
  // skipped (they are transient search state, reset at each window rebuild).
  void visit_params(const std::function<void(std::vector<double>&)>& fn,
                    bool include_branch_weights = true);
  void visit_params(const std::function<void(const std::vector<double>&)>& fn,
                    bool include_branch_weights = true) const;

  // Current dilation structure: plain blocks report their rate, search blocks
  // their window center.
  DilationStructure current_structure() const;
};

// Deterministic uniform fan-in initialization.
TcnModel build_model(const TcnConfig& cfg, Rng& rng);

// Model whose blocks are shared-kernel multi-dilated layers over the given
// windows (flat layer order); branch weights start uniform at 1/S.
TcnModel build_search_model(const TcnConfig& cfg, const std::vector<LocalWindow>& windows,
                            PmfKind pmf, Rng& rng);

// Rebuilds every block's window (centers from `structure`), resets branch
// weights to uniform, keeps all trained kernels.
void recenter_search_model(TcnModel& model, const DilationStructure& structure, double fraction,
                           int sample_count);

// Per-stage class scores (K x T each); later stages consume the previous
// stage's softmax probabilities.
std::vector<Matrix> forward(const TcnModel& model, const Matrix& features);

std::vector<int> predict_labels(const TcnModel& model, const Matrix& features);

// Frame-wise cross-entropy plus truncated-MSE smoothing, summed over stages.
double sequence_loss(const TcnModel& model, const FrameSequence& seq, const TrainingConfig& tcfg);

// Gradient accumulator mirroring visit_params order.
struct GradientBuffer {
  std::vector<std::vector<double>> tensors;
};

GradientBuffer make_gradient_buffer(const TcnModel& model);

// Accumulates dLoss/dparams for one sequence, scaled by `scale`; returns the
// loss value. Throws DivergenceError if the loss is non-finite. When
// `input_grad` is given it receives dLoss/dfeatures (unscaled).
double accumulate_gradients(const TcnModel& model, const FrameSequence& seq,
                            const TrainingConfig& tcfg, double scale, GradientBuffer& grads,
                            Matrix* input_grad = nullptr);

// Momentum-SGD state, in visit_params order.
struct Optimizer {
  double lr = 0.05;
  double momentum = 0.9;
  std::vector<std::vector<double>> velocity;

  void step(TcnModel& model, const GradientBuffer& grads);
  void reset_branch_velocities(const TcnModel& model);
};

Optimizer make_optimizer(const TcnModel& model, const TrainingConfig& tcfg);

// Re-slots velocities after a model gained branch tensors (e.g. a plain model
// loaded from disk was recentered into a search model). Persistent tensor
// velocities are kept, branch slots start at zero.
void expand_optimizer(const TcnModel& model, Optimizer& opt);

struct TrainResult {
  std::vector<double> loss_curve;  // mean loss per epoch
};

// Plain SGD loop; deterministic given tcfg.seed (drives the epoch shuffles).
TrainResult train(TcnModel& model, const std::vector<FrameSequence>& data,
                  const TrainingConfig& tcfg);
TrainResult train(TcnModel& model, const std::vector<FrameSequence>& data,
                  const TrainingConfig& tcfg, Optimizer& opt, Rng& rng, int epochs);

// Which validation metric a fitness evaluation reads.
struct MetricSelector {
  enum class Kind { Acc, Edit, F1 } kind = Kind::F1;
  double tau = 0.1;

  static MetricSelector parse(const std::string& text);  // "acc" | "edit" | "f1@0.1"
  std::string to_string() const;
};

// Fitness of a structure: train a fresh model for `epochs` epochs on the
// train split, return the selected metric on the validation split, in
// [0, 100]. Training divergence yields fitness 0 plus a warning record.
double evaluate_structure(const DilationStructure& structure,
                          const std::vector<FrameSequence>& train_set,
                          const std::vector<FrameSequence>& val_set, int epochs,
                          const MetricSelector& metric, const TcnConfig& base_cfg,
                          const TrainingConfig& base_tcfg, std::uint64_t seed,
                          std::vector<std::string>* warnings = nullptr);

// Versioned binary container: magic G2LTCN1, text header (config echo), then
// named little-endian float64 blobs.
void save_model(const TcnModel& model, const Optimizer* opt, const std::string& path);
TcnModel load_model(const std::string& path, Optimizer* opt = nullptr);

}  // namespace g2l
