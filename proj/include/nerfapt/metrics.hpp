// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nerfapt/core.hpp"

namespace nerfapt {

enum class MetricName { kMedianRmseDb, kSnrDb, kSsim };

std::string to_string(MetricName name);

struct MetricReport {
  MetricName name = MetricName::kSnrDb;
  double value = 0.0;
  std::vector<double> per_record;
};

/// RMSE within each group, then the median over groups (mean of the two
/// middle values for an even group count). Throws DomainError on empty or
/// mismatched input.
double median_rmse(std::span<const double> pred, std::span<const double> truth,
                   std::span<const std::string> groups);

/// 10·log10(mean|truth|² / mean|pred - truth|²). An exact match returns
/// +infinity. Throws DomainError on shape mismatch or all-zero truth.
double snr_db(std::span<const Complex> pred, std::span<const Complex> truth);
double snr_db(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth);

struct SsimOptions {
  int window = 7;
  double dynamic_range = 1.0;
  double k1 = 0.01;
  double k2 = 0.03;
  bool gaussian = false;  // Gaussian-weighted window statistics instead of a box
  double sigma = 1.5;
};

/// Mean of the local SSIM map over every fully contained window position.
/// Throws DomainError on shape mismatch, an even window, or a window larger
/// than the smaller image dimension.
double ssim(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const SsimOptions& options = {});

/// Largest odd window not exceeding `preferred` that fits a rows × cols image.
int fitting_window(Eigen::Index rows, Eigen::Index cols, int preferred = 7);

}  // namespace nerfapt
