// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "nerfapt/core.hpp"

#include <cmath>

#include "nerfapt/errors.hpp"

namespace nerfapt {

Complex from_polar(double amplitude, double phase) {
  return std::polar(amplitude, phase);
}

Polar to_polar(Complex x) {
  double phase = std::arg(x);
  if (phase < 0.0) phase += 2.0 * kPi;
  if (phase >= 2.0 * kPi) phase -= 2.0 * kPi;
  return {std::abs(x), phase};
}

Complex channel_from_paths(std::span<const PathComponent> paths) {
  if (paths.empty()) throw DomainError("channel_from_paths: empty path list");
  Complex sum{0.0, 0.0};
  for (const auto& p : paths) {
    if (!(p.delta_a >= 0.0)) throw DomainError("channel_from_paths: negative path attenuation");
    sum += std::polar(p.delta_a, p.delta_theta);
  }
  return sum;
}

Complex received_signal(Complex x, std::span<const PathComponent> paths) {
  return x * channel_from_paths(paths);
}

double rssi_db(Complex h) {
  const double power = std::norm(h);
  if (power == 0.0) throw DomainError("rssi_db: zero channel has no finite power");
  return 10.0 * std::log10(power);
}

Complex mean_response(const Channel& channel) {
  if (channel.h.empty()) throw DomainError("mean_response: empty channel");
  Complex sum{0.0, 0.0};
  for (auto v : channel.h) sum += v;
  return sum / static_cast<double>(channel.h.size());
}

}  // namespace nerfapt
