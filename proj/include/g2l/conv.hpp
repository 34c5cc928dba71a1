#pragma once

#include <cstddef>

#include "g2l/matrix.hpp"

namespace g2l {

// 1D dilated convolution primitives with odd kernel width and symmetric zero
// padding, so sequence length is preserved:
//
//   y[o][t] += scale * sum_{c,k} w[(o*C + c)*K + k] * x[c][t + (k - K/2)*d]
//
// Out-of-range taps read as zero. All functions accumulate into their output
// so multi-branch layers can mix contributions without temporaries; callers
// zero the destination first. Summation order is fixed (o, c, k, t) which
// keeps results bit-reproducible.

void dilated_conv_accumulate(const Matrix& x, const double* w, std::size_t out_channels,
                             std::size_t kernel, long long dilation, double scale, Matrix& y);

// Accumulates dL/dx given upstream dL/dy.
void dilated_conv_grad_input(const Matrix& gy, const double* w, std::size_t in_channels,
                             std::size_t kernel, long long dilation, double scale, Matrix& gx);

// Accumulates dL/dw given upstream dL/dy and the forward input.
void dilated_conv_grad_weight(const Matrix& gy, const Matrix& x, std::size_t kernel,
                              long long dilation, double scale, double* gw);

// y[o][t] += b[o]
void add_bias_rows(Matrix& y, const double* b);

// gb[o] += scale * sum_t gy[o][t]
void bias_grad(const Matrix& gy, double scale, double* gb);

// Per-frame linear map (a 1x1 convolution): y = W x + b with W out x in.
void linear_forward(const Matrix& x, const double* w, const double* b, std::size_t out_channels,
                    Matrix& y);
void linear_grad_input(const Matrix& gy, const double* w, std::size_t in_channels, Matrix& gx);
void linear_grad_weight(const Matrix& gy, const Matrix& x, double scale, double* gw);

}  // namespace g2l
