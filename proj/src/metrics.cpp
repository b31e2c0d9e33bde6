// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "nerfapt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "nerfapt/errors.hpp"

namespace nerfapt {

std::string to_string(MetricName name) {
  switch (name) {
    case MetricName::kMedianRmseDb:
      return "median_rmse_db";
    case MetricName::kSnrDb:
      return "snr_db";
    case MetricName::kSsim:
      return "ssim";
  }
  return "snr_db";
}

double median_rmse(std::span<const double> pred, std::span<const double> truth, std::span<const std::string> groups) {
  if (pred.empty()) throw DomainError("median_rmse: empty input");
  if (pred.size() != truth.size() || pred.size() != groups.size()) {
    throw DomainError("median_rmse: prediction, truth and group lengths differ");
  }
  std::map<std::string, std::pair<double, std::size_t>> sums;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - truth[i];
    auto& [sq, n] = sums[groups[i]];
    sq += e * e;
    ++n;
  }
  std::vector<double> rmse;
  rmse.reserve(sums.size());
  for (const auto& [group, acc] : sums) rmse.push_back(std::sqrt(acc.first / static_cast<double>(acc.second)));
  std::sort(rmse.begin(), rmse.end());
  const std::size_t m = rmse.size();
  return m % 2 == 1 ? rmse[m / 2] : 0.5 * (rmse[m / 2 - 1] + rmse[m / 2]);
}

namespace {

double snr_from_powers(double signal, double noise) {
  if (!(signal > 0.0)) throw DomainError("snr_db: truth is all zero");
  if (noise == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(signal / noise);
}

}  // namespace

double snr_db(std::span<const Complex> pred, std::span<const Complex> truth) {
  if (pred.size() != truth.size() || truth.empty()) throw DomainError("snr_db: shapes differ");
  double signal = 0.0;
  double noise = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    signal += std::norm(truth[i]);
    noise += std::norm(pred[i] - truth[i]);
  }
  return snr_from_powers(signal, noise);
}

double snr_db(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols() || truth.size() == 0) {
    throw DomainError("snr_db: shapes differ");
  }
  return snr_from_powers(truth.squaredNorm(), (pred - truth).squaredNorm());
}

int fitting_window(Eigen::Index rows, Eigen::Index cols, int preferred) {
  int w = static_cast<int>(std::min<Eigen::Index>({rows, cols, preferred}));
  if (w % 2 == 0) --w;
  return std::max(w, 1);
}

double ssim(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const SsimOptions& options) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) throw DomainError("ssim: shapes differ");
  const int w = options.window;
  if (w < 1 || w % 2 == 0) throw DomainError("ssim: window must be a positive odd integer");
  if (w > x.rows() || w > x.cols()) throw DomainError("ssim: window exceeds the image size");

  Eigen::MatrixXd weights(w, w);
  if (options.gaussian) {
    const double c = (w - 1) / 2.0;
    for (int i = 0; i < w; ++i) {
      for (int j = 0; j < w; ++j) {
        const double r2 = (i - c) * (i - c) + (j - c) * (j - c);
        weights(i, j) = std::exp(-r2 / (2.0 * options.sigma * options.sigma));
      }
    }
  } else {
    weights.setOnes();
  }
  weights /= weights.sum();

  const double c1 = std::pow(options.k1 * options.dynamic_range, 2);
  const double c2 = std::pow(options.k2 * options.dynamic_range, 2);
  double total = 0.0;
  const Eigen::Index rows = x.rows() - w + 1;
  const Eigen::Index cols = x.cols() - w + 1;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto xb = x.block(r, c, w, w).array();
      const auto yb = y.block(r, c, w, w).array();
      const double mx = (weights.array() * xb).sum();
      const double my = (weights.array() * yb).sum();
      const double vx = (weights.array() * (xb - mx) * (xb - mx)).sum();
      const double vy = (weights.array() * (yb - my) * (yb - my)).sum();
      const double cov = (weights.array() * (xb - mx) * (yb - my)).sum();
      total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  }
  return total / static_cast<double>(rows * cols);
}

}  // namespace nerfapt
