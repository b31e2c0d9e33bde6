// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "nerfapt/encoding.hpp"

#include <cmath>

#include "nerfapt/core.hpp"
#include "nerfapt/errors.hpp"

namespace nerfapt {

namespace {

void check_config(const EncoderConfig& cfg) {
  if (cfg.num_frequencies < 0) throw ConfigError("positional encoding: negative frequency count");
}

}  // namespace

std::vector<double> positional_encode(std::span<const double> x, const EncoderConfig& cfg) {
  check_config(cfg);
  const int dim = static_cast<int>(x.size());
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(cfg.output_dim(dim)));
  for (double v : x) {
    if (!std::isfinite(v)) throw DomainError("positional encoding: non-finite input");
  }
  if (cfg.include_input) out.insert(out.end(), x.begin(), x.end());
  for (int k = 0; k < cfg.num_frequencies; ++k) {
    const double freq = std::ldexp(kPi, k);
    for (double v : x) out.push_back(std::sin(freq * v));
    for (double v : x) out.push_back(std::cos(freq * v));
  }
  return out;
}

Eigen::MatrixXd positional_encode_columns(const Eigen::MatrixXd& x, const EncoderConfig& cfg) {
  check_config(cfg);
  if (!x.allFinite()) throw DomainError("positional encoding: non-finite input");
  const Eigen::Index dim = x.rows();
  Eigen::MatrixXd out(cfg.output_dim(static_cast<int>(dim)), x.cols());
  Eigen::Index row = 0;
  if (cfg.include_input) {
    out.topRows(dim) = x;
    row = dim;
  }
  for (int k = 0; k < cfg.num_frequencies; ++k) {
    const double freq = std::ldexp(kPi, k);
    out.middleRows(row, dim) = (freq * x.array()).sin().matrix();
    out.middleRows(row + dim, dim) = (freq * x.array()).cos().matrix();
    row += 2 * dim;
  }
  return out;
}

}  // namespace nerfapt
