#include "g2l/multidilated.hpp"

#include <algorithm>
#include <cmath>

#include "g2l/conv.hpp"
#include "g2l/errors.hpp"

namespace g2l {

PmfKind pmf_kind_from_string(const std::string& name) {
  if (name == "abs") return PmfKind::AbsNormalize;
  if (name == "sigmoid") return PmfKind::SigmoidNormalize;
  if (name == "softmax") return PmfKind::Softmax;
  throw ConfigError("pmf kind must be one of abs|sigmoid|softmax, got '" + name + "'");
}

const char* to_string(PmfKind kind) {
  switch (kind) {
    case PmfKind::AbsNormalize: return "abs";
    case PmfKind::SigmoidNormalize: return "sigmoid";
    case PmfKind::Softmax: return "softmax";
  }
  return "abs";
}

double round_half_even(double x) {
  const double f = std::floor(x);
  const double frac = x - f;
  if (frac > 0.5) return f + 1.0;
  if (frac < 0.5) return f;
  return std::fmod(f, 2.0) == 0.0 ? f : f + 1.0;
}

LocalWindow build_local_window(long long center, double fraction, int sample_count) {
  if (center < 1) throw ConfigError("local window: center dilation must be >= 1");
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("local window: fraction must lie in (0,1), got " + std::to_string(fraction));
  }
  if (sample_count < 2) {
    throw ConfigError("local window: sample count must be >= 2, got " +
                      std::to_string(sample_count));
  }
  LocalWindow win;
  win.center = center;
  const double half_width = fraction * static_cast<double>(center);
  const double step = 2.0 * half_width / static_cast<double>(sample_count - 1);
  win.raw.resize(static_cast<std::size_t>(sample_count));
  for (int i = 0; i < sample_count; ++i) {
    win.raw[static_cast<std::size_t>(i)] =
        static_cast<double>(center) - half_width + static_cast<double>(i) * step;
  }
  // The midpoint is the center by construction; pin it so the "center is a
  // member of the window" invariant survives float rounding.
  if (sample_count % 2 == 1) {
    win.raw[static_cast<std::size_t>(sample_count / 2)] = static_cast<double>(center);
  }
  win.materialized.resize(win.raw.size());
  for (std::size_t i = 0; i < win.raw.size(); ++i) {
    win.materialized[i] = std::max(1ll, static_cast<long long>(round_half_even(win.raw[i])));
  }
  return win;
}

LocalWindow single_dilation_window(long long dilation) {
  if (dilation < 1) throw ConfigError("local window: dilation must be >= 1");
  LocalWindow win;
  win.center = dilation;
  win.raw = {static_cast<double>(dilation)};
  win.materialized = {dilation};
  return win;
}

std::vector<double> pmf_from_weights(const std::vector<double>& w, PmfKind kind) {
  if (w.empty()) throw ConfigError("pmf: empty weight vector");
  std::vector<double> alpha(w.size());
  switch (kind) {
    case PmfKind::AbsNormalize: {
      double total = 0.0;
      for (double wi : w) total += std::fabs(wi);
      if (total == 0.0) throw DegenerateWeightsError("pmf: all branch weights are exactly zero");
      for (std::size_t i = 0; i < w.size(); ++i) alpha[i] = std::fabs(w[i]) / total;
      return alpha;
    }
    case PmfKind::SigmoidNormalize: {
      double total = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        alpha[i] = 1.0 / (1.0 + std::exp(-w[i]));
        total += alpha[i];
      }
      for (auto& a : alpha) a /= total;
      return alpha;
    }
    case PmfKind::Softmax: {
      const double m = *std::max_element(w.begin(), w.end());
      double total = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        alpha[i] = std::exp(w[i] - m);
        total += alpha[i];
      }
      for (auto& a : alpha) a /= total;
      return alpha;
    }
  }
  throw ConfigError("pmf: unknown kind");
}

std::vector<double> pmf_backward(const std::vector<double>& w,
                                 const std::vector<double>& grad_alpha, PmfKind kind) {
  if (w.size() != grad_alpha.size()) throw ShapeError("pmf_backward: size mismatch");
  const std::vector<double> alpha = pmf_from_weights(w, kind);
  // All three normalizations share dL/dw_j = coeff_j * (g_j - <g, alpha>).
  double g_dot_alpha = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) g_dot_alpha += grad_alpha[i] * alpha[i];

  std::vector<double> gw(w.size());
  switch (kind) {
    case PmfKind::AbsNormalize: {
      double total = 0.0;
      for (double wi : w) total += std::fabs(wi);
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double sign = w[j] > 0.0 ? 1.0 : (w[j] < 0.0 ? -1.0 : 0.0);
        gw[j] = sign / total * (grad_alpha[j] - g_dot_alpha);
      }
      return gw;
    }
    case PmfKind::SigmoidNormalize: {
      double total = 0.0;
      std::vector<double> v(w.size());
      for (std::size_t i = 0; i < w.size(); ++i) {
        v[i] = 1.0 / (1.0 + std::exp(-w[i]));
        total += v[i];
      }
      for (std::size_t j = 0; j < w.size(); ++j) {
        gw[j] = v[j] * (1.0 - v[j]) / total * (grad_alpha[j] - g_dot_alpha);
      }
      return gw;
    }
    case PmfKind::Softmax: {
      for (std::size_t j = 0; j < w.size(); ++j) {
        gw[j] = alpha[j] * (grad_alpha[j] - g_dot_alpha);
      }
      return gw;
    }
  }
  throw ConfigError("pmf_backward: unknown kind");
}

void MultiDilatedLayerState::validate() const {
  if (kernel % 2 == 0 || kernel == 0) throw ConfigError("multi-dilated layer: kernel width must be odd");
  if (theta.size() != out_channels * in_channels * kernel) {
    throw ShapeError("multi-dilated layer: kernel tensor size mismatch");
  }
  if (!bias.empty() && bias.size() != out_channels) {
    throw ShapeError("multi-dilated layer: bias size mismatch");
  }
  if (branch_weights.size() != window.size() || window.size() == 0) {
    throw ShapeError("multi-dilated layer: branch count mismatch");
  }
}

namespace {

std::vector<double> branch_pmf_or_uniform(const std::vector<double>& w, PmfKind kind) {
  try {
    return pmf_from_weights(w, kind);
  } catch (const DegenerateWeightsError&) {
    return std::vector<double>(w.size(), 1.0 / static_cast<double>(w.size()));
  }
}

}  // namespace

Matrix multi_dilated_forward(const Matrix& x, const MultiDilatedLayerState& state) {
  state.validate();
  if (x.rows() != state.in_channels) {
    throw ShapeError("multi-dilated forward: input has " + std::to_string(x.rows()) +
                     " channels, kernel expects " + std::to_string(state.in_channels));
  }
  const std::vector<double> alpha = branch_pmf_or_uniform(state.branch_weights, state.pmf);
  Matrix y(state.out_channels, x.cols(), 0.0);
  for (std::size_t i = 0; i < state.window.size(); ++i) {
    dilated_conv_accumulate(x, state.theta.data(), state.out_channels, state.kernel,
                            state.window.materialized[i], alpha[i], y);
  }
  if (!state.bias.empty()) add_bias_rows(y, state.bias.data());
  return y;
}

MultiDilatedGrads multi_dilated_backward(const Matrix& gy, const Matrix& x,
                                         const MultiDilatedLayerState& state) {
  state.validate();
  if (x.rows() != state.in_channels || gy.rows() != state.out_channels || gy.cols() != x.cols()) {
    throw ShapeError("multi-dilated backward: gradient/input shape mismatch");
  }
  const std::vector<double> alpha = branch_pmf_or_uniform(state.branch_weights, state.pmf);

  MultiDilatedGrads g;
  g.input = Matrix(x.rows(), x.cols(), 0.0);
  g.theta.assign(state.theta.size(), 0.0);
  g.bias.assign(state.bias.size(), 0.0);

  std::vector<double> grad_alpha(state.window.size(), 0.0);
  Matrix branch(state.out_channels, x.cols(), 0.0);
  for (std::size_t i = 0; i < state.window.size(); ++i) {
    const long long d = state.window.materialized[i];
    // dL/dalpha_i = <gy, conv_i(x)>
    branch.fill(0.0);
    dilated_conv_accumulate(x, state.theta.data(), state.out_channels, state.kernel, d, 1.0, branch);
    double dot = 0.0;
    const double* b = branch.data();
    const double* gp = gy.data();
    for (std::size_t n = 0; n < branch.size(); ++n) dot += b[n] * gp[n];
    grad_alpha[i] = dot;

    dilated_conv_grad_input(gy, state.theta.data(), state.in_channels, state.kernel, d, alpha[i],
                            g.input);
    dilated_conv_grad_weight(gy, x, state.kernel, d, alpha[i], g.theta.data());
  }
  if (!state.bias.empty()) bias_grad(gy, 1.0, g.bias.data());
  g.branch_weights = pmf_backward(state.branch_weights, grad_alpha, state.pmf);
  return g;
}

long long expected_dilation(const LocalWindow& window, const std::vector<double>& alpha) {
  if (alpha.size() != window.size()) {
    throw ShapeError("expected_dilation: pmf size " + std::to_string(alpha.size()) +
                     " does not match window size " + std::to_string(window.size()));
  }
  double sum = 0.0;
  double expectation = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (alpha[i] < -1e-12) throw ConfigError("expected_dilation: pmf has a negative entry");
    sum += alpha[i];
    expectation += alpha[i] * window.raw[i];
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw ConfigError("expected_dilation: pmf does not sum to 1");
  const auto floored = static_cast<long long>(std::floor(expectation + 1e-9));
  return std::max(1ll, floored);
}

}  // namespace g2l
