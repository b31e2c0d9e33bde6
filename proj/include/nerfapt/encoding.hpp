// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

namespace nerfapt {

/// Sin/cos frequency lifting with bands 2^k·π, k = 0 … num_frequencies-1.
struct EncoderConfig {
  int num_frequencies = 10;
  bool include_input = true;

  int output_dim(int input_dim) const {
    return input_dim * (2 * num_frequencies + (include_input ? 1 : 0));
  }
};

/// Layout: [x, sin(π x), cos(π x), sin(2π x), cos(2π x), …]; each block spans
/// all input components. Throws DomainError on non-finite input.
std::vector<double> positional_encode(std::span<const double> x, const EncoderConfig& cfg);

/// Column-wise encoding of a (dim × n) matrix into (output_dim × n).
Eigen::MatrixXd positional_encode_columns(const Eigen::MatrixXd& x, const EncoderConfig& cfg);

}  // namespace nerfapt
