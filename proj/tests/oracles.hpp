// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

// Naive reference implementations used as test oracles. They index plain
// (batch, channel, length) arrays with explicit loops and share no code with
// the library kernels.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace oracle {

struct Tensor {
  int batch = 0;
  int channels = 0;
  int length = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int b, int c, int l) : batch(b), channels(c), length(l), data(static_cast<std::size_t>(b) * c * l, 0.0) {}

  double& at(int b, int c, int l) { return data[(static_cast<std::size_t>(b) * channels + c) * length + l]; }
  double at(int b, int c, int l) const { return data[(static_cast<std::size_t>(b) * channels + c) * length + l]; }
};

// From the channel-major library layout (channels × batch·length).
inline Tensor from_layout(const Eigen::MatrixXd& m, int batch, int length) {
  Tensor t(batch, static_cast<int>(m.rows()), length);
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < t.channels; ++c)
      for (int l = 0; l < length; ++l) t.at(b, c, l) = m(c, b * length + l);
  return t;
}

// Weight is out × (in·K), column in·K + tap; zero "same" padding.
inline Tensor conv(const Tensor& x, const Eigen::MatrixXd& w, const Eigen::MatrixXd& bias, int kernel) {
  const int out = static_cast<int>(w.rows());
  const int half = kernel / 2;
  Tensor y(x.batch, out, x.length);
  for (int b = 0; b < x.batch; ++b) {
    for (int o = 0; o < out; ++o) {
      for (int l = 0; l < x.length; ++l) {
        double acc = bias.size() > 0 ? bias(o, 0) : 0.0;
        for (int i = 0; i < x.channels; ++i) {
          for (int t = 0; t < kernel; ++t) {
            const int src = l + t - half;
            if (src < 0 || src >= x.length) continue;
            acc += w(o, i * kernel + t) * x.at(b, i, src);
          }
        }
        y.at(b, o, l) = acc;
      }
    }
  }
  return y;
}

inline Tensor relu(Tensor x) {
  for (double& v : x.data) v = v > 0.0 ? v : 0.0;
  return x;
}

inline Tensor max_pool2(const Tensor& x) {
  Tensor y(x.batch, x.channels, (x.length + 1) / 2);
  for (int b = 0; b < x.batch; ++b)
    for (int c = 0; c < x.channels; ++c)
      for (int i = 0; i < y.length; ++i) {
        double m = x.at(b, c, 2 * i);
        if (2 * i + 1 < x.length) m = std::max(m, x.at(b, c, 2 * i + 1));
        y.at(b, c, i) = m;
      }
  return y;
}

// Output i copies input floor(i·L/O).
inline Tensor nearest(const Tensor& x, int out_len) {
  Tensor y(x.batch, x.channels, out_len);
  for (int b = 0; b < x.batch; ++b)
    for (int c = 0; c < x.channels; ++c)
      for (int i = 0; i < out_len; ++i) y.at(b, c, i) = x.at(b, c, static_cast<int>(std::floor(double(i) * x.length / out_len)));
  return y;
}

// Output i averages inputs [floor(i·L/O), ceil((i+1)·L/O)).
inline Tensor avg_pool(const Tensor& x, int out_len) {
  Tensor y(x.batch, x.channels, out_len);
  for (int b = 0; b < x.batch; ++b)
    for (int c = 0; c < x.channels; ++c)
      for (int i = 0; i < out_len; ++i) {
        const int lo = static_cast<int>(std::floor(double(i) * x.length / out_len));
        const int hi = static_cast<int>(std::ceil(double(i + 1) * x.length / out_len));
        double s = 0.0;
        for (int k = lo; k < hi; ++k) s += x.at(b, c, k);
        y.at(b, c, i) = s / (hi - lo);
      }
  return y;
}

inline Tensor resample(const Tensor& x, int out_len) {
  if (out_len == x.length) return x;
  return out_len < x.length ? avg_pool(x, out_len) : nearest(x, out_len);
}

inline Tensor concat(const Tensor& a, const Tensor& b) {
  Tensor y(a.batch, a.channels + b.channels, a.length);
  for (int n = 0; n < a.batch; ++n)
    for (int l = 0; l < a.length; ++l) {
      for (int c = 0; c < a.channels; ++c) y.at(n, c, l) = a.at(n, c, l);
      for (int c = 0; c < b.channels; ++c) y.at(n, a.channels + c, l) = b.at(n, c, l);
    }
  return y;
}

// softmax over l of Φ((W_Q q + W_K kv)/√d_k), broadcast onto W_V kv.
inline Tensor attention(const Tensor& q, const Tensor& kv, const Eigen::MatrixXd& wq, const Eigen::MatrixXd& wk,
                        const Eigen::MatrixXd& wv, const Eigen::MatrixXd& phi_w, const Eigen::MatrixXd& phi_b,
                        int d_k, std::vector<double>* weights = nullptr) {
  const Eigen::MatrixXd none;
  const Tensor qq = conv(q, wq, none, 1);
  const Tensor kk = conv(kv, wk, none, 1);
  const Tensor vv = conv(kv, wv, none, 1);
  Tensor merged(qq.batch, qq.channels, qq.length);
  for (std::size_t i = 0; i < merged.data.size(); ++i) merged.data[i] = (qq.data[i] + kk.data[i]) / std::sqrt(double(d_k));
  const Tensor score = conv(merged, phi_w, phi_b, 1);
  Tensor out(vv.batch, vv.channels, vv.length);
  if (weights) weights->clear();
  for (int b = 0; b < score.batch; ++b) {
    double denom = 0.0;
    for (int l = 0; l < score.length; ++l) denom += std::exp(score.at(b, 0, l));
    for (int l = 0; l < score.length; ++l) {
      const double a = std::exp(score.at(b, 0, l)) / denom;
      if (weights) weights->push_back(a);
      for (int c = 0; c < vv.channels; ++c) out.at(b, c, l) = a * vv.at(b, c, l);
    }
  }
  return out;
}

// Σ_n s_n Π_{m<n} e^{-δ_m}, one product per term.
inline std::complex<double> accumulate(const std::vector<std::complex<double>>& delta,
                                       const std::vector<std::complex<double>>& s) {
  std::complex<double> total{0.0, 0.0};
  for (std::size_t n = 0; n < s.size(); ++n) {
    std::complex<double> t{1.0, 0.0};
    for (std::size_t m = 0; m < n; ++m) t *= std::exp(-delta[m]);
    total += t * s[n];
  }
  return total;
}

// Central difference of f at x[i].
inline double central_difference(const std::function<double()>& f, double& x, double eps) {
  const double saved = x;
  x = saved + eps;
  const double up = f();
  x = saved - eps;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * eps);
}

inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// SSIM with explicit loops over every w×w window, two-pass
// population statistics, box weights.
inline double ssim(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, int w, double c1, double c2) {
  double total = 0.0;
  int windows = 0;
  for (Eigen::Index r = 0; r + w <= x.rows(); ++r) {
    for (Eigen::Index c = 0; c + w <= x.cols(); ++c) {
      const double n = static_cast<double>(w) * w;
      double mx = 0.0, my = 0.0;
      for (int i = 0; i < w; ++i)
        for (int j = 0; j < w; ++j) {
          mx += x(r + i, c + j) / n;
          my += y(r + i, c + j) / n;
        }
      double vx = 0.0, vy = 0.0, cov = 0.0;
      for (int i = 0; i < w; ++i)
        for (int j = 0; j < w; ++j) {
          const double dx = x(r + i, c + j) - mx;
          const double dy = y(r + i, c + j) - my;
          vx += dx * dx / n;
          vy += dy * dy / n;
          cov += dx * dy / n;
        }
      total += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++windows;
    }
  }
  return total / windows;
}

inline double snr_db(const std::vector<std::complex<double>>& pred, const std::vector<std::complex<double>>& truth) {
  double signal = 0.0;
  double noise = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    signal += truth[i].real() * truth[i].real() + truth[i].imag() * truth[i].imag();
    const double dr = pred[i].real() - truth[i].real();
    const double di = pred[i].imag() - truth[i].imag();
    noise += dr * dr + di * di;
  }
  return 10.0 * std::log10(signal / noise);
}

// Groups by linear scan over distinct labels; median by full sort.
inline double median_rmse(const std::vector<double>& pred, const std::vector<double>& truth,
                          const std::vector<std::string>& groups) {
  std::vector<std::string> labels;
  for (const auto& g : groups)
    if (std::find(labels.begin(), labels.end(), g) == labels.end()) labels.push_back(g);
  std::vector<double> rmse;
  for (const auto& label : labels) {
    double sq = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      if (groups[i] != label) continue;
      sq += (pred[i] - truth[i]) * (pred[i] - truth[i]);
      ++n;
    }
    rmse.push_back(std::sqrt(sq / n));
  }
  std::sort(rmse.begin(), rmse.end());
  const std::size_t m = rmse.size();
  return m % 2 ? rmse[m / 2] : (rmse[m / 2 - 1] + rmse[m / 2]) / 2.0;
}

}  // namespace oracle
