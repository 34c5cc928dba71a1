#include "g2l/tcn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "g2l/conv.hpp"
#include "g2l/errors.hpp"
#include "g2l/metrics.hpp"

namespace g2l {

void TcnConfig::validate() const {
  if (in_features < 1) throw ConfigError("tcn: in_features must be >= 1");
  if (hidden < 1) throw ConfigError("tcn: hidden must be >= 1");
  if (num_classes < 1) throw ConfigError("tcn: num_classes must be >= 1");
  if (kernel % 2 == 0) throw ConfigError("tcn: kernel width must be odd");
  structure.validate();
}

void TrainingConfig::validate() const {
  if (epochs < 1) throw ConfigError("training: epochs must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("training: lr must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("training: momentum must lie in [0,1)");
  if (batch_size < 1) throw ConfigError("training: batch_size must be >= 1");
  if (smoothing_lambda < 0.0) throw ConfigError("training: smoothing lambda must be >= 0");
  if (!(smoothing_clip > 0.0)) throw ConfigError("training: smoothing clip must be > 0");
}

std::size_t TcnModel::parameter_count() const {
  std::size_t n = 0;
  visit_params([&](const std::vector<double>& t) { n += t.size(); });
  return n;
}

void TcnModel::visit_params(const std::function<void(std::vector<double>&)>& fn,
                            bool include_branch_weights) {
  for (auto& stage : stages) {
    fn(stage.in_w);
    fn(stage.in_b);
    for (auto& block : stage.blocks) {
      fn(block.conv_w);
      fn(block.conv_b);
      fn(block.pw_w);
      fn(block.pw_b);
      if (include_branch_weights && block.is_search_block()) fn(block.branch_w);
    }
    fn(stage.out_w);
    fn(stage.out_b);
  }
}

void TcnModel::visit_params(const std::function<void(const std::vector<double>&)>& fn,
                            bool include_branch_weights) const {
  const_cast<TcnModel*>(this)->visit_params(
      [&](std::vector<double>& t) { fn(t); }, include_branch_weights);
}

DilationStructure TcnModel::current_structure() const {
  DilationStructure s;
  for (const auto& stage : stages) {
    std::vector<Dilation> rates;
    rates.reserve(stage.blocks.size());
    for (const auto& block : stage.blocks) rates.push_back(block.window.center);
    s.stages.push_back(std::move(rates));
  }
  return s;
}

namespace {

void init_uniform(std::vector<double>& w, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& x : w) x = (2.0 * rng.uniform() - 1.0) * bound;
}

TcnModel build_model_impl(const TcnConfig& cfg, const std::vector<LocalWindow>* windows,
                          PmfKind pmf, Rng& rng) {
  cfg.validate();
  TcnModel model;
  model.cfg = cfg;
  model.pmf = pmf;
  const std::size_t H = cfg.hidden;
  const std::size_t K = cfg.num_classes;
  std::size_t flat_layer = 0;
  for (std::size_t s = 0; s < cfg.structure.stages.size(); ++s) {
    const std::size_t c_in = s == 0 ? cfg.in_features : K;
    TcnStage stage;
    stage.in_w.resize(H * c_in);
    stage.in_b.resize(H);
    init_uniform(stage.in_w, c_in, rng);
    init_uniform(stage.in_b, c_in, rng);
    for (Dilation d : cfg.structure.stages[s]) {
      DilatedBlock block;
      if (windows) {
        block.window = (*windows)[flat_layer];
        block.branch_w.assign(block.window.size(), 1.0 / static_cast<double>(block.window.size()));
      } else {
        block.window = single_dilation_window(d);
      }
      block.conv_w.resize(H * H * cfg.kernel);
      block.conv_b.resize(H);
      block.pw_w.resize(H * H);
      block.pw_b.resize(H);
      init_uniform(block.conv_w, H * cfg.kernel, rng);
      init_uniform(block.conv_b, H * cfg.kernel, rng);
      init_uniform(block.pw_w, H, rng);
      init_uniform(block.pw_b, H, rng);
      stage.blocks.push_back(std::move(block));
      ++flat_layer;
    }
    stage.out_w.resize(K * H);
    stage.out_b.resize(K);
    init_uniform(stage.out_w, H, rng);
    init_uniform(stage.out_b, H, rng);
    model.stages.push_back(std::move(stage));
  }
  return model;
}

}  // namespace

TcnModel build_model(const TcnConfig& cfg, Rng& rng) {
  return build_model_impl(cfg, nullptr, PmfKind::AbsNormalize, rng);
}

TcnModel build_search_model(const TcnConfig& cfg, const std::vector<LocalWindow>& windows,
                            PmfKind pmf, Rng& rng) {
  if (windows.size() != cfg.structure.layer_count()) {
    throw ShapeError("build_search_model: window count does not match layer count");
  }
  return build_model_impl(cfg, &windows, pmf, rng);
}

void recenter_search_model(TcnModel& model, const DilationStructure& structure, double fraction,
                           int sample_count) {
  if (!model.current_structure().same_shape(structure)) {
    throw ShapeError("recenter_search_model: structure shape mismatch");
  }
  std::size_t flat = 0;
  const auto rates = structure.flatten();
  for (auto& stage : model.stages) {
    for (auto& block : stage.blocks) {
      block.window = build_local_window(rates[flat], fraction, sample_count);
      block.branch_w.assign(block.window.size(), 1.0 / static_cast<double>(block.window.size()));
      ++flat;
    }
  }
}

namespace {

struct BlockCache {
  Matrix input;     // x_l
  Matrix pre_act;   // z
  Matrix post_act;  // a
  std::vector<Matrix> branch_out;
  std::vector<double> alpha;
};

struct StageCache {
  Matrix input;
  std::vector<BlockCache> blocks;
  Matrix final_hidden;
  Matrix logits;
  Matrix probs;
  Matrix logprobs;
};

std::vector<double> block_alpha(const DilatedBlock& block, PmfKind pmf) {
  if (!block.is_search_block()) return {1.0};
  try {
    return pmf_from_weights(block.branch_w, pmf);
  } catch (const DegenerateWeightsError&) {
    return std::vector<double>(block.branch_w.size(), 1.0 / static_cast<double>(block.branch_w.size()));
  }
}

// probs/logprobs per column with the usual max-shift stabilization.
void softmax_columns(const Matrix& logits, Matrix& probs, Matrix* logprobs) {
  const std::size_t K = logits.rows();
  const std::size_t T = logits.cols();
  for (std::size_t t = 0; t < T; ++t) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) m = std::max(m, logits.at(k, t));
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) sum += std::exp(logits.at(k, t) - m);
    const double log_z = m + std::log(sum);
    for (std::size_t k = 0; k < K; ++k) {
      const double lp = logits.at(k, t) - log_z;
      probs.at(k, t) = std::exp(lp);
      if (logprobs) logprobs->at(k, t) = lp;
    }
  }
}

void block_forward(const TcnModel& model, const DilatedBlock& block, const Matrix& x,
                   BlockCache* cache, Matrix& out) {
  const std::size_t H = model.cfg.hidden;
  const std::size_t T = x.cols();
  const std::vector<double> alpha = block_alpha(block, model.pmf);

  Matrix z(H, T, 0.0);
  if (cache) cache->branch_out.clear();
  for (std::size_t i = 0; i < block.window.size(); ++i) {
    const long long d = block.window.materialized[i];
    if (cache && block.is_search_block()) {
      Matrix branch(H, T, 0.0);
      dilated_conv_accumulate(x, block.conv_w.data(), H, model.cfg.kernel, d, 1.0, branch);
      const double* src = branch.data();
      double* dst = z.data();
      const double a = alpha[i];
      for (std::size_t n = 0; n < z.size(); ++n) dst[n] += a * src[n];
      cache->branch_out.push_back(std::move(branch));
    } else {
      dilated_conv_accumulate(x, block.conv_w.data(), H, model.cfg.kernel, d, alpha[i], z);
    }
  }
  add_bias_rows(z, block.conv_b.data());

  Matrix a(H, T, 0.0);
  for (std::size_t n = 0; n < z.size(); ++n) a.data()[n] = z.data()[n] > 0.0 ? z.data()[n] : 0.0;

  Matrix p(H, T, 0.0);
  linear_forward(a, block.pw_w.data(), block.pw_b.data(), H, p);

  out = x;
  for (std::size_t n = 0; n < out.size(); ++n) out.data()[n] += p.data()[n];

  if (cache) {
    cache->input = x;
    cache->pre_act = std::move(z);
    cache->post_act = std::move(a);
    cache->alpha = alpha;
  }
}

std::vector<Matrix> forward_impl(const TcnModel& model, const Matrix& features,
                                 std::vector<StageCache>* caches) {
  if (features.rows() != model.cfg.in_features) {
    throw ShapeError("tcn forward: input has " + std::to_string(features.rows()) +
                     " feature channels, model expects " + std::to_string(model.cfg.in_features));
  }
  if (features.cols() < 1) throw ShapeError("tcn forward: empty sequence");

  const std::size_t H = model.cfg.hidden;
  const std::size_t K = model.cfg.num_classes;
  const std::size_t T = features.cols();

  std::vector<Matrix> all_logits;
  Matrix stage_in = features;
  for (const auto& stage : model.stages) {
    StageCache* sc = nullptr;
    if (caches) {
      caches->emplace_back();
      sc = &caches->back();
      sc->input = stage_in;
    }
    Matrix h(H, T, 0.0);
    linear_forward(stage_in, stage.in_w.data(), stage.in_b.data(), H, h);
    for (const auto& block : stage.blocks) {
      BlockCache* bc = nullptr;
      if (sc) {
        sc->blocks.emplace_back();
        bc = &sc->blocks.back();
      }
      Matrix next;
      block_forward(model, block, h, bc, next);
      h = std::move(next);
    }
    Matrix logits(K, T, 0.0);
    linear_forward(h, stage.out_w.data(), stage.out_b.data(), K, logits);
    Matrix probs(K, T, 0.0);
    if (sc) {
      sc->final_hidden = std::move(h);
      sc->logprobs = Matrix(K, T, 0.0);
      softmax_columns(logits, probs, &sc->logprobs);
      sc->logits = logits;
      sc->probs = probs;
    } else {
      softmax_columns(logits, probs, nullptr);
    }
    all_logits.push_back(std::move(logits));
    stage_in = std::move(probs);
  }
  return all_logits;
}

double stage_loss(const StageCache& sc, const LabelSequence& labels, const TrainingConfig& tcfg) {
  const std::size_t T = labels.size();
  const std::size_t K = sc.logprobs.rows();
  double ce = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    ce -= sc.logprobs.at(static_cast<std::size_t>(labels[t]), t);
  }
  ce /= static_cast<double>(T);

  double smooth = 0.0;
  if (tcfg.smoothing_lambda > 0.0 && T > 1) {
    for (std::size_t k = 0; k < K; ++k) {
      const double* lp = sc.logprobs.row(k);
      for (std::size_t t = 1; t < T; ++t) {
        const double delta = std::min(std::fabs(lp[t] - lp[t - 1]), tcfg.smoothing_clip);
        smooth += delta * delta;
      }
    }
    smooth /= static_cast<double>((T - 1) * K);
  }
  return ce + tcfg.smoothing_lambda * smooth;
}

// dLoss/dlogits for one stage's own loss terms (CE + smoothing).
Matrix stage_loss_grad(const StageCache& sc, const LabelSequence& labels,
                       const TrainingConfig& tcfg) {
  const std::size_t K = sc.logprobs.rows();
  const std::size_t T = sc.logprobs.cols();

  Matrix glogp(K, T, 0.0);
  if (tcfg.smoothing_lambda > 0.0 && T > 1) {
    const double norm =
        tcfg.smoothing_lambda * 2.0 / static_cast<double>((T - 1) * K);
    for (std::size_t k = 0; k < K; ++k) {
      const double* lp = sc.logprobs.row(k);
      double* g = glogp.row(k);
      for (std::size_t t = 1; t < T; ++t) {
        const double delta = lp[t] - lp[t - 1];
        if (std::fabs(delta) < tcfg.smoothing_clip) {
          g[t] += norm * delta;
          g[t - 1] -= norm * delta;
        }
      }
    }
  }

  // d(logp)/d(logits) chain: glogit[k] = glogp[k] - p[k] * sum_j glogp[j];
  // CE adds (p - onehot)/T directly in logit space.
  Matrix glogits(K, T, 0.0);
  const double inv_t = 1.0 / static_cast<double>(T);
  for (std::size_t t = 0; t < T; ++t) {
    double gsum = 0.0;
    for (std::size_t k = 0; k < K; ++k) gsum += glogp.at(k, t);
    for (std::size_t k = 0; k < K; ++k) {
      double g = glogp.at(k, t) - sc.probs.at(k, t) * gsum;
      g += inv_t * (sc.probs.at(k, t) - (labels[t] == static_cast<int>(k) ? 1.0 : 0.0));
      glogits.at(k, t) = g;
    }
  }
  return glogits;
}

// Tensor indices into visit_params(include_branch_weights=true) order.
struct TensorLayout {
  struct StageIdx {
    std::size_t in_w, in_b, out_w, out_b;
    struct BlockIdx {
      std::size_t conv_w, conv_b, pw_w, pw_b;
      std::size_t branch_w = SIZE_MAX;
    };
    std::vector<BlockIdx> blocks;
  };
  std::vector<StageIdx> stages;
};

TensorLayout layout_of(const TcnModel& model) {
  TensorLayout layout;
  std::size_t idx = 0;
  for (const auto& stage : model.stages) {
    TensorLayout::StageIdx si;
    si.in_w = idx++;
    si.in_b = idx++;
    for (const auto& block : stage.blocks) {
      TensorLayout::StageIdx::BlockIdx bi;
      bi.conv_w = idx++;
      bi.conv_b = idx++;
      bi.pw_w = idx++;
      bi.pw_b = idx++;
      if (block.is_search_block()) bi.branch_w = idx++;
      si.blocks.push_back(bi);
    }
    si.out_w = idx++;
    si.out_b = idx++;
    layout.stages.push_back(std::move(si));
  }
  return layout;
}

void axpy(double a, const Matrix& x, Matrix& y) {
  const double* src = x.data();
  double* dst = y.data();
  for (std::size_t n = 0; n < y.size(); ++n) dst[n] += a * src[n];
}

}  // namespace

std::vector<Matrix> forward(const TcnModel& model, const Matrix& features) {
  return forward_impl(model, features, nullptr);
}

std::vector<int> predict_labels(const TcnModel& model, const Matrix& features) {
  const auto logits = forward(model, features);
  const Matrix& last = logits.back();
  std::vector<int> out(last.cols(), 0);
  for (std::size_t t = 0; t < last.cols(); ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < last.rows(); ++k) {
      if (last.at(k, t) > last.at(best, t)) best = k;
    }
    out[t] = static_cast<int>(best);
  }
  return out;
}

GradientBuffer make_gradient_buffer(const TcnModel& model) {
  GradientBuffer g;
  model.visit_params([&](const std::vector<double>& t) { g.tensors.emplace_back(t.size(), 0.0); });
  return g;
}

double sequence_loss(const TcnModel& model, const FrameSequence& seq, const TrainingConfig& tcfg) {
  std::vector<StageCache> caches;
  forward_impl(model, seq.features, &caches);
  double loss = 0.0;
  for (const auto& sc : caches) loss += stage_loss(sc, seq.labels, tcfg);
  return loss;
}

double accumulate_gradients(const TcnModel& model, const FrameSequence& seq,
                            const TrainingConfig& tcfg, double scale, GradientBuffer& grads,
                            Matrix* input_grad) {
  seq.validate();
  for (int l : seq.labels) {
    if (l >= static_cast<int>(model.cfg.num_classes)) {
      throw ShapeError("train: label " + std::to_string(l) + " out of range for " +
                       std::to_string(model.cfg.num_classes) + " classes");
    }
  }

  std::vector<StageCache> caches;
  forward_impl(model, seq.features, &caches);

  double loss = 0.0;
  for (const auto& sc : caches) loss += stage_loss(sc, seq.labels, tcfg);
  if (!std::isfinite(loss)) {
    throw DivergenceError("training diverged: non-finite loss on sequence '" + seq.id + "'");
  }

  const TensorLayout layout = layout_of(model);
  const std::size_t H = model.cfg.hidden;
  const std::size_t K = model.cfg.num_classes;
  const std::size_t T = seq.features.cols();

  // Gradient wrt the input of the stage above (its input is this stage's probs).
  Matrix g_next_input;
  for (std::size_t s = model.stages.size(); s-- > 0;) {
    const auto& stage = model.stages[s];
    const auto& sc = caches[s];
    const auto& sl = layout.stages[s];

    Matrix glogits = stage_loss_grad(sc, seq.labels, tcfg);
    if (g_next_input.size() > 0) {
      // Softmax jacobian: dL/dlogit[k] += p[k] * (g[k] - sum_j g[j] p[j]).
      for (std::size_t t = 0; t < T; ++t) {
        double dot = 0.0;
        for (std::size_t k = 0; k < K; ++k) dot += g_next_input.at(k, t) * sc.probs.at(k, t);
        for (std::size_t k = 0; k < K; ++k) {
          glogits.at(k, t) += sc.probs.at(k, t) * (g_next_input.at(k, t) - dot);
        }
      }
    }

    // Classifier.
    Matrix gh(H, T, 0.0);
    linear_grad_input(glogits, stage.out_w.data(), H, gh);
    linear_grad_weight(glogits, sc.final_hidden, scale, grads.tensors[sl.out_w].data());
    bias_grad(glogits, scale, grads.tensors[sl.out_b].data());

    // Residual blocks in reverse.
    for (std::size_t l = stage.blocks.size(); l-- > 0;) {
      const auto& block = stage.blocks[l];
      const auto& bc = sc.blocks[l];
      const auto& bl = sl.blocks[l];

      // gh is dL/d(block output). Residual: out = input + pw(relu(z)).
      Matrix ga(H, T, 0.0);
      linear_grad_input(gh, block.pw_w.data(), H, ga);
      linear_grad_weight(gh, bc.post_act, scale, grads.tensors[bl.pw_w].data());
      bias_grad(gh, scale, grads.tensors[bl.pw_b].data());

      Matrix gz = std::move(ga);
      for (std::size_t n = 0; n < gz.size(); ++n) {
        if (bc.pre_act.data()[n] <= 0.0) gz.data()[n] = 0.0;
      }

      bias_grad(gz, scale, grads.tensors[bl.conv_b].data());
      if (block.is_search_block()) {
        std::vector<double> grad_alpha(block.window.size(), 0.0);
        for (std::size_t i = 0; i < block.window.size(); ++i) {
          const double* b = bc.branch_out[i].data();
          const double* g = gz.data();
          double dot = 0.0;
          for (std::size_t n = 0; n < gz.size(); ++n) dot += b[n] * g[n];
          grad_alpha[i] = dot;
          dilated_conv_grad_input(gz, block.conv_w.data(), H, model.cfg.kernel,
                                  block.window.materialized[i], bc.alpha[i], gh);
          dilated_conv_grad_weight(gz, bc.input, model.cfg.kernel, block.window.materialized[i],
                                   scale * bc.alpha[i], grads.tensors[bl.conv_w].data());
        }
        const auto gbw = pmf_backward(block.branch_w, grad_alpha, model.pmf);
        for (std::size_t i = 0; i < gbw.size(); ++i) {
          grads.tensors[bl.branch_w][i] += scale * gbw[i];
        }
      } else {
        dilated_conv_grad_input(gz, block.conv_w.data(), H, model.cfg.kernel,
                                block.window.materialized[0], 1.0, gh);
        dilated_conv_grad_weight(gz, bc.input, model.cfg.kernel, block.window.materialized[0],
                                 scale, grads.tensors[bl.conv_w].data());
      }
    }

    // Projection.
    linear_grad_weight(gh, sc.input, scale, grads.tensors[sl.in_w].data());
    bias_grad(gh, scale, grads.tensors[sl.in_b].data());
    if (s > 0) {
      g_next_input = Matrix(sc.input.rows(), T, 0.0);
      linear_grad_input(gh, stage.in_w.data(), sc.input.rows(), g_next_input);
    } else if (input_grad) {
      *input_grad = Matrix(sc.input.rows(), T, 0.0);
      linear_grad_input(gh, stage.in_w.data(), sc.input.rows(), *input_grad);
    }
  }
  return loss;
}

Optimizer make_optimizer(const TcnModel& model, const TrainingConfig& tcfg) {
  Optimizer opt;
  opt.lr = tcfg.lr;
  opt.momentum = tcfg.momentum;
  model.visit_params(
      [&](const std::vector<double>& t) { opt.velocity.emplace_back(t.size(), 0.0); });
  return opt;
}

void Optimizer::step(TcnModel& model, const GradientBuffer& grads) {
  std::size_t idx = 0;
  model.visit_params([&](std::vector<double>& p) {
    const auto& g = grads.tensors[idx];
    auto& v = velocity[idx];
    for (std::size_t n = 0; n < p.size(); ++n) {
      v[n] = momentum * v[n] + g[n];
      p[n] -= lr * v[n];
    }
    ++idx;
  });
}

void expand_optimizer(const TcnModel& model, Optimizer& opt) {
  std::size_t expected = 0;
  model.visit_params([&](const std::vector<double>&) { ++expected; }, true);
  if (opt.velocity.size() == expected) return;

  std::vector<std::vector<double>> full;
  full.reserve(expected);
  std::size_t src = 0;
  auto take = [&]() {
    if (src >= opt.velocity.size()) throw DataError("expand_optimizer: velocity layout mismatch");
    full.push_back(std::move(opt.velocity[src++]));
  };
  for (const auto& stage : model.stages) {
    take();  // in_w
    take();  // in_b
    for (const auto& block : stage.blocks) {
      for (int k = 0; k < 4; ++k) take();
      if (block.is_search_block()) full.emplace_back(block.branch_w.size(), 0.0);
    }
    take();  // out_w
    take();  // out_b
  }
  if (src != opt.velocity.size()) throw DataError("expand_optimizer: velocity layout mismatch");
  opt.velocity = std::move(full);
}

void Optimizer::reset_branch_velocities(const TcnModel& model) {
  std::size_t idx = 0;
  for (const auto& stage : model.stages) {
    idx += 2;  // in_w, in_b
    for (const auto& block : stage.blocks) {
      idx += 4;  // conv_w, conv_b, pw_w, pw_b
      if (block.is_search_block()) {
        velocity[idx].assign(velocity[idx].size(), 0.0);
        ++idx;
      }
    }
    idx += 2;  // out_w, out_b
  }
}

TrainResult train(TcnModel& model, const std::vector<FrameSequence>& data,
                  const TrainingConfig& tcfg) {
  tcfg.validate();
  Optimizer opt = make_optimizer(model, tcfg);
  Rng rng(tcfg.seed);
  return train(model, data, tcfg, opt, rng, tcfg.epochs);
}

TrainResult train(TcnModel& model, const std::vector<FrameSequence>& data,
                  const TrainingConfig& tcfg, Optimizer& opt, Rng& rng, int epochs) {
  if (data.empty()) throw ConfigError("train: empty dataset");
  TrainResult result;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  GradientBuffer grads = make_gradient_buffer(model);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t pos = 0;
    while (pos < order.size()) {
      const std::size_t batch =
          std::min<std::size_t>(static_cast<std::size_t>(tcfg.batch_size), order.size() - pos);
      for (auto& t : grads.tensors) std::fill(t.begin(), t.end(), 0.0);
      const double scale = 1.0 / static_cast<double>(batch);
      for (std::size_t b = 0; b < batch; ++b) {
        epoch_loss += accumulate_gradients(model, data[order[pos + b]], tcfg, scale, grads);
      }
      opt.step(model, grads);
      pos += batch;
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  return result;
}

MetricSelector MetricSelector::parse(const std::string& text) {
  MetricSelector m;
  if (text == "acc") {
    m.kind = Kind::Acc;
    return m;
  }
  if (text == "edit") {
    m.kind = Kind::Edit;
    return m;
  }
  if (text.rfind("f1@", 0) == 0) {
    m.kind = Kind::F1;
    try {
      m.tau = std::stod(text.substr(3));
    } catch (const std::exception&) {
      throw ConfigError("metric: cannot parse threshold in '" + text + "'");
    }
    if (!(m.tau > 0.0 && m.tau < 1.0)) {
      throw ConfigError("metric: F1 threshold must lie in (0,1), got '" + text + "'");
    }
    return m;
  }
  throw ConfigError("metric must be acc|edit|f1@<tau>, got '" + text + "'");
}

std::string MetricSelector::to_string() const {
  switch (kind) {
    case Kind::Acc: return "acc";
    case Kind::Edit: return "edit";
    case Kind::F1: {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "f1@%g", tau);
      return buf;
    }
  }
  return "f1@0.1";
}

double evaluate_structure(const DilationStructure& structure,
                          const std::vector<FrameSequence>& train_set,
                          const std::vector<FrameSequence>& val_set, int epochs,
                          const MetricSelector& metric, const TcnConfig& base_cfg,
                          const TrainingConfig& base_tcfg, std::uint64_t seed,
                          std::vector<std::string>* warnings) {
  TcnConfig cfg = base_cfg;
  cfg.structure = structure;
  cfg.validate();
  if (train_set.empty() || val_set.empty()) {
    throw ConfigError("evaluate_structure: empty train or validation split");
  }
  TrainingConfig tcfg = base_tcfg;
  tcfg.epochs = epochs;
  tcfg.seed = derive_seed(seed, "train");
  tcfg.validate();

  Rng init_rng(derive_seed(seed, "init"));
  TcnModel model = build_model(cfg, init_rng);
  try {
    train(model, train_set, tcfg);
  } catch (const DivergenceError& e) {
    if (warnings) {
      warnings->push_back("structure " + encode_structure(structure) +
                          ": fitness set to 0 (" + e.what() + ")");
    }
    return 0.0;
  }

  std::vector<LabelSequence> preds, gts;
  preds.reserve(val_set.size());
  gts.reserve(val_set.size());
  for (const auto& seq : val_set) {
    preds.push_back(predict_labels(model, seq.features));
    gts.push_back(seq.labels);
  }
  const MetricsReport rep = report(preds, gts, {metric.tau});
  switch (metric.kind) {
    case MetricSelector::Kind::Acc: return rep.acc;
    case MetricSelector::Kind::Edit: return rep.edit;
    case MetricSelector::Kind::F1: return rep.f1_at(metric.tau);
  }
  return 0.0;
}

namespace {

void write_f64_blob(std::ofstream& out, const std::vector<double>& values) {
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
  }
}

std::vector<double> read_f64_blob(std::ifstream& in, std::size_t count, const std::string& path) {
  std::vector<double> values(count);
  for (auto& v : values) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) {
      throw DataError("model checkpoint truncated: " + path);
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    std::memcpy(&v, &bits, 8);
  }
  return values;
}

std::vector<double> flatten_params(const TcnModel& model, bool include_branch) {
  std::vector<double> flat;
  model.visit_params(
      [&](const std::vector<double>& t) { flat.insert(flat.end(), t.begin(), t.end()); },
      include_branch);
  return flat;
}

void unflatten_params(TcnModel& model, const std::vector<double>& flat, bool include_branch,
                      const std::string& path) {
  std::size_t pos = 0;
  model.visit_params(
      [&](std::vector<double>& t) {
        if (pos + t.size() > flat.size()) {
          throw DataError("model checkpoint has too few parameters: " + path);
        }
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                  flat.begin() + static_cast<std::ptrdiff_t>(pos + t.size()), t.begin());
        pos += t.size();
      },
      include_branch);
  if (pos != flat.size()) throw DataError("model checkpoint has extra parameters: " + path);
}

}  // namespace

void save_model(const TcnModel& model, const Optimizer* opt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_model: cannot write " + path);
  out << "G2LTCN1\n";
  out << "in_features=" << model.cfg.in_features << '\n';
  out << "hidden=" << model.cfg.hidden << '\n';
  out << "num_classes=" << model.cfg.num_classes << '\n';
  out << "kernel=" << model.cfg.kernel << '\n';
  out << "pmf=" << to_string(model.pmf) << '\n';
  out << "structure=" << encode_structure(model.current_structure()) << '\n';

  // Persistent parameters only: branch weights are transient search state.
  const std::vector<double> params = flatten_params(model, false);
  out << "blob params " << params.size() << '\n';
  write_f64_blob(out, params);
  if (opt) {
    std::vector<double> vel;
    std::size_t idx = 0;
    // Velocity entries follow include_branch=true order; keep only the
    // persistent ones, mirrored against the model walk.
    model.visit_params([&](const std::vector<double>&) { ++idx; }, true);
    if (opt->velocity.size() != idx) throw DataError("save_model: optimizer does not match model");
    idx = 0;
    for (const auto& stage : model.stages) {
      vel.insert(vel.end(), opt->velocity[idx].begin(), opt->velocity[idx].end());
      ++idx;  // in_w
      vel.insert(vel.end(), opt->velocity[idx].begin(), opt->velocity[idx].end());
      ++idx;  // in_b
      for (const auto& block : stage.blocks) {
        for (int k = 0; k < 4; ++k) {
          vel.insert(vel.end(), opt->velocity[idx].begin(), opt->velocity[idx].end());
          ++idx;
        }
        if (block.is_search_block()) ++idx;  // skip branch velocity
      }
      vel.insert(vel.end(), opt->velocity[idx].begin(), opt->velocity[idx].end());
      ++idx;  // out_w
      vel.insert(vel.end(), opt->velocity[idx].begin(), opt->velocity[idx].end());
      ++idx;  // out_b
    }
    out << "blob velocity " << vel.size() << '\n';
    write_f64_blob(out, vel);
  }
  if (!out) throw DataError("save_model: write failed for " + path);
}

TcnModel load_model(const std::string& path, Optimizer* opt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_model: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "G2LTCN1") {
    throw DataError("load_model: bad magic in " + path);
  }
  TcnConfig cfg;
  PmfKind pmf = PmfKind::AbsNormalize;
  std::string blob_name;
  std::size_t blob_count = 0;
  while (std::getline(in, line)) {
    if (line.rfind("blob ", 0) == 0) {
      const auto space = line.find(' ', 5);
      if (space == std::string::npos) throw DataError("load_model: malformed blob line in " + path);
      blob_name = line.substr(5, space - 5);
      blob_count = std::stoull(line.substr(space + 1));
      break;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("load_model: malformed header line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    try {
      if (key == "in_features") cfg.in_features = std::stoul(value);
      else if (key == "hidden") cfg.hidden = std::stoul(value);
      else if (key == "num_classes") cfg.num_classes = std::stoul(value);
      else if (key == "kernel") cfg.kernel = std::stoul(value);
      else if (key == "pmf") pmf = pmf_kind_from_string(value);
      else if (key == "structure") cfg.structure = decode_structure(value);
      else throw DataError("load_model: unknown header key '" + key + "' in " + path);
    } catch (const ParseError& e) {
      throw DataError(std::string("load_model: ") + e.what());
    }
  }
  if (blob_name != "params") throw DataError("load_model: expected params blob in " + path);

  Rng rng(0);
  TcnModel model = build_model(cfg, rng);
  model.pmf = pmf;
  unflatten_params(model, read_f64_blob(in, blob_count, path), false, path);

  if (opt) {
    opt->velocity.clear();
    model.visit_params(
        [&](const std::vector<double>& t) { opt->velocity.emplace_back(t.size(), 0.0); });
    if (std::getline(in, line) && line.rfind("blob velocity ", 0) == 0) {
      const std::size_t count = std::stoull(line.substr(14));
      const auto vel = read_f64_blob(in, count, path);
      std::size_t pos = 0, idx = 0;
      model.visit_params(
          [&](std::vector<double>& t) {
            if (pos + t.size() > vel.size()) {
              throw DataError("load_model: velocity blob too small in " + path);
            }
            std::copy(vel.begin() + static_cast<std::ptrdiff_t>(pos),
                      vel.begin() + static_cast<std::ptrdiff_t>(pos + t.size()),
                      opt->velocity[idx].begin());
            pos += t.size();
            ++idx;
          },
          false);
    }
  }
  return model;
}

}  // namespace g2l
