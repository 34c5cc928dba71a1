#include "g2l/conv.hpp"

#include <algorithm>

namespace g2l {

namespace {

// Valid destination range [t0, t1) such that t + off stays inside [0, T).
inline void tap_range(std::size_t frames, long long off, std::size_t& t0, std::size_t& t1) {
  const auto T = static_cast<long long>(frames);
  t0 = static_cast<std::size_t>(std::max(0ll, -off));
  t1 = static_cast<std::size_t>(std::clamp(T - off, 0ll, T));
}

}  // namespace

void dilated_conv_accumulate(const Matrix& x, const double* w, std::size_t out_channels,
                             std::size_t kernel, long long dilation, double scale, Matrix& y) {
  const std::size_t C = x.rows();
  const std::size_t T = x.cols();
  const auto half = static_cast<long long>(kernel / 2);
  for (std::size_t o = 0; o < out_channels; ++o) {
    double* yo = y.row(o);
    for (std::size_t c = 0; c < C; ++c) {
      const double* xc = x.row(c);
      const double* wk = w + (o * C + c) * kernel;
      for (std::size_t k = 0; k < kernel; ++k) {
        const long long off = (static_cast<long long>(k) - half) * dilation;
        const double coeff = scale * wk[k];
        std::size_t t0, t1;
        tap_range(T, off, t0, t1);
        const double* src = xc + off;
        for (std::size_t t = t0; t < t1; ++t) yo[t] += coeff * src[t];
      }
    }
  }
}

void dilated_conv_grad_input(const Matrix& gy, const double* w, std::size_t in_channels,
                             std::size_t kernel, long long dilation, double scale, Matrix& gx) {
  const std::size_t O = gy.rows();
  const std::size_t T = gy.cols();
  const auto half = static_cast<long long>(kernel / 2);
  for (std::size_t c = 0; c < in_channels; ++c) {
    double* gxc = gx.row(c);
    for (std::size_t o = 0; o < O; ++o) {
      const double* gyo = gy.row(o);
      const double* wk = w + (o * in_channels + c) * kernel;
      for (std::size_t k = 0; k < kernel; ++k) {
        // forward reads x[c][t + off]; transpose scatters gy[o][t] into gx[c][t + off],
        // i.e. gx[c][u] += w * gy[o][u - off]
        const long long off = (static_cast<long long>(k) - half) * dilation;
        const double coeff = scale * wk[k];
        std::size_t t0, t1;
        tap_range(T, -off, t0, t1);
        const double* src = gyo - off;
        for (std::size_t t = t0; t < t1; ++t) gxc[t] += coeff * src[t];
      }
    }
  }
}

void dilated_conv_grad_weight(const Matrix& gy, const Matrix& x, std::size_t kernel,
                              long long dilation, double scale, double* gw) {
  const std::size_t O = gy.rows();
  const std::size_t C = x.rows();
  const std::size_t T = x.cols();
  const auto half = static_cast<long long>(kernel / 2);
  for (std::size_t o = 0; o < O; ++o) {
    const double* gyo = gy.row(o);
    for (std::size_t c = 0; c < C; ++c) {
      const double* xc = x.row(c);
      double* wk = gw + (o * C + c) * kernel;
      for (std::size_t k = 0; k < kernel; ++k) {
        const long long off = (static_cast<long long>(k) - half) * dilation;
        std::size_t t0, t1;
        tap_range(T, off, t0, t1);
        const double* src = xc + off;
        double acc = 0.0;
        for (std::size_t t = t0; t < t1; ++t) acc += gyo[t] * src[t];
        wk[k] += scale * acc;
      }
    }
  }
}

void add_bias_rows(Matrix& y, const double* b) {
  for (std::size_t o = 0; o < y.rows(); ++o) {
    double* yo = y.row(o);
    const double bo = b[o];
    for (std::size_t t = 0; t < y.cols(); ++t) yo[t] += bo;
  }
}

void bias_grad(const Matrix& gy, double scale, double* gb) {
  for (std::size_t o = 0; o < gy.rows(); ++o) {
    const double* gyo = gy.row(o);
    double acc = 0.0;
    for (std::size_t t = 0; t < gy.cols(); ++t) acc += gyo[t];
    gb[o] += scale * acc;
  }
}

void linear_forward(const Matrix& x, const double* w, const double* b, std::size_t out_channels,
                    Matrix& y) {
  const std::size_t C = x.rows();
  const std::size_t T = x.cols();
  for (std::size_t o = 0; o < out_channels; ++o) {
    double* yo = y.row(o);
    const double bo = b ? b[o] : 0.0;
    for (std::size_t t = 0; t < T; ++t) yo[t] = bo;
    for (std::size_t c = 0; c < C; ++c) {
      const double coeff = w[o * C + c];
      const double* xc = x.row(c);
      for (std::size_t t = 0; t < T; ++t) yo[t] += coeff * xc[t];
    }
  }
}

void linear_grad_input(const Matrix& gy, const double* w, std::size_t in_channels, Matrix& gx) {
  const std::size_t O = gy.rows();
  const std::size_t T = gy.cols();
  for (std::size_t c = 0; c < in_channels; ++c) {
    double* gxc = gx.row(c);
    for (std::size_t o = 0; o < O; ++o) {
      const double coeff = w[o * in_channels + c];
      const double* gyo = gy.row(o);
      for (std::size_t t = 0; t < T; ++t) gxc[t] += coeff * gyo[t];
    }
  }
}

void linear_grad_weight(const Matrix& gy, const Matrix& x, double scale, double* gw) {
  const std::size_t O = gy.rows();
  const std::size_t C = x.rows();
  const std::size_t T = x.cols();
  for (std::size_t o = 0; o < O; ++o) {
    const double* gyo = gy.row(o);
    for (std::size_t c = 0; c < C; ++c) {
      const double* xc = x.row(c);
      double acc = 0.0;
      for (std::size_t t = 0; t < T; ++t) acc += gyo[t] * xc[t];
      gw[o * C + c] += scale * acc;
    }
  }
}

}  // namespace g2l
