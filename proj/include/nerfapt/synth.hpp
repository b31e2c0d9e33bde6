// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nerfapt/core.hpp"
#include "nerfapt/dataio.hpp"
#include "nerfapt/scene.hpp"

namespace nerfapt {

struct DirectionGrid;

/// Shoebox room spanning [0, dimensions] with perfectly specular walls.
struct RoomSpec {
  Eigen::Vector3d dimensions{4.0, 4.0, 3.0};
  double reflection_coeff = 0.6;
  int max_order = 3;
  double carrier_hz = 2.4e9;
  int num_subcarriers = 64;
  double subcarrier_spacing_hz = 312.5e3;

  double subcarrier_hz(int k) const {
    return carrier_hz + (k - num_subcarriers / 2) * subcarrier_spacing_hz;
  }
  bool contains(const Position3& p) const;
  /// Throws ConfigError on invalid parameters.
  void validate() const;
};

/// Named stand-ins for the three indoor scenes: "bedroom", "conference", "office".
RoomSpec preset_room(const std::string& name);
std::vector<std::string> preset_names();

struct ImageSource {
  Position3 position;
  int bounces = 0;
};

/// Mirror images of `tx` across the six walls with at most `order`
/// reflections, deduplicated, ordered by bounce count. Throws DomainError when
/// tx is not strictly inside the room and ConfigError when order exceeds
/// room.max_order.
std::vector<ImageSource> image_sources(const RoomSpec& room, const Position3& tx, int order);

/// Frequency response at rx summed over image sources up to room.max_order.
/// Throws DomainError for coincident tx/rx or positions outside the room.
Channel synth_channel(const RoomSpec& room, const Position3& tx, const Position3& rx);

/// Arrival spectrum at rx: image-source contributions at the carrier summed
/// coherently per direction cell, then |.|² normalized to a maximum of 1.
Eigen::MatrixXd synth_spectrum(const RoomSpec& room, const Position3& tx, const Position3& rx,
                               const DirectionGrid& grid);

/// Scene description matching a room, with the room's OFDM layout.
SceneConfig scene_for_room(const RoomSpec& room, const SceneConfig& base = {});

struct DatasetOptions {
  int num_tx = 1;
  int num_rx = 1;
  std::uint64_t seed = 0;
  std::optional<double> noise_db;  // per-record SNR of injected complex white noise
  double margin = 0.25;            // minimum distance from any wall
  double min_separation = 0.1;     // minimum tx-rx distance
  Task task = Task::kCsi;
  int azimuth_bins = 36;           // spectrum task only
  int elevation_bins = 9;
  bool full_sphere = false;
};

/// One record per (rx, tx) pair, receivers outermost. Placements are uniform
/// over the room shrunk by the margin; each record's noise draws from its own
/// stream derived from (seed, record index).
std::vector<ChannelRecord> generate_dataset(const RoomSpec& room, const DatasetOptions& options);

}  // namespace nerfapt
