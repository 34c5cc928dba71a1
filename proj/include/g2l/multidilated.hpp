#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "g2l/matrix.hpp"

namespace g2l {

// How branch weights are normalized into a probability mass function.
enum class PmfKind { AbsNormalize, SigmoidNormalize, Softmax };

PmfKind pmf_kind_from_string(const std::string& name);  // throws ConfigError
const char* to_string(PmfKind kind);

// Evenly spaced dilation window around a center rate. `raw` keeps the real
// sample positions; `materialized` is what the convolution actually runs at
// (rounded half-to-even, clamped to >= 1). The expectation collapse uses the
// raw values.
struct LocalWindow {
  long long center = 1;
  std::vector<double> raw;
  std::vector<long long> materialized;

  std::size_t size() const { return raw.size(); }
};

// Samples S dilations in [center*(1-fraction), center*(1+fraction)].
// Requires center >= 1, fraction in (0,1), sample_count >= 2.
LocalWindow build_local_window(long long center, double fraction, int sample_count);

// Window with a single branch at exactly `dilation`; the degenerate setup a
// plain convolution corresponds to.
LocalWindow single_dilation_window(long long dilation);

double round_half_even(double x);

// Branch-weight normalization. Throws DegenerateWeightsError when every
// weight is exactly zero (AbsNormalize only; the other kinds are total).
std::vector<double> pmf_from_weights(const std::vector<double>& w,
                                     PmfKind kind = PmfKind::AbsNormalize);

// dL/dw given dL/dalpha. Subgradient 0 is used for |w| at w = 0.
std::vector<double> pmf_backward(const std::vector<double>& w,
                                 const std::vector<double>& grad_alpha, PmfKind kind);

// One shared kernel applied at each branch dilation, outputs mixed by the
// PMF of the branch weights.
struct MultiDilatedLayerState {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t kernel = 3;  // odd
  std::vector<double> theta;           // out*in*kernel, shared across branches
  std::vector<double> bias;            // size out_channels, or empty for none
  std::vector<double> branch_weights;  // W, size S
  LocalWindow window;
  PmfKind pmf = PmfKind::AbsNormalize;

  void validate() const;
};

// y = sum_i alpha_i * conv(x, theta, d_i) (+ bias). If the weights are all
// zero the PMF falls back to uniform, mirroring how a training loop recovers
// from a degenerate state.
Matrix multi_dilated_forward(const Matrix& x, const MultiDilatedLayerState& state);

struct MultiDilatedGrads {
  Matrix input;
  std::vector<double> theta;
  std::vector<double> bias;
  std::vector<double> branch_weights;
};

MultiDilatedGrads multi_dilated_backward(const Matrix& gy, const Matrix& x,
                                         const MultiDilatedLayerState& state);

// floor(sum_i alpha_i * raw_i) over the raw window samples, clamped to >= 1.
// A 1e-9 snap guards the floor against float roundoff when the expectation
// is an exact integer in real arithmetic.
long long expected_dilation(const LocalWindow& window, const std::vector<double>& alpha);

}  // namespace g2l
