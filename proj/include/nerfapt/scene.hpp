// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nerfapt/core.hpp"

namespace nerfapt {

/// Geometry, sampling and OFDM layout shared by rendering, the field inputs
/// and the dataset manifest.
struct SceneConfig {
  Position3 bounds_min{0.0, 0.0, 0.0};
  Position3 bounds_max{4.0, 4.0, 3.0};
  int azimuth_bins = 36;
  int elevation_bins = 9;
  bool full_sphere = false;  // elevation over [-π/2, π/2] instead of [0, π/2]
  int samples_per_ray = 64;
  double max_distance = 0.0;  // 0 selects the scene diagonal
  double carrier_hz = 2.4e9;
  int num_subcarriers = 64;
  double subcarrier_spacing_hz = 312.5e3;

  double ray_length() const { return max_distance > 0.0 ? max_distance : (bounds_max - bounds_min).norm(); }
  double subcarrier_hz(int k) const {
    return carrier_hz + (k - num_subcarriers / 2) * subcarrier_spacing_hz;
  }
  /// Maps a position to [-1, 1]^3; coordinates outside the bounds are clamped
  /// and reported through `clamped`.
  Position3 normalize(const Position3& p, bool* clamped = nullptr) const;
  void validate() const;
};

}  // namespace nerfapt
