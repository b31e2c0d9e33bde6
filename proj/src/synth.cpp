// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "nerfapt/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

#include "nerfapt/errors.hpp"
#include "nerfapt/random.hpp"
#include "nerfapt/raytrace.hpp"

namespace nerfapt {

bool RoomSpec::contains(const Position3& p) const {
  for (int i = 0; i < 3; ++i) {
    if (!(p[i] > 0.0 && p[i] < dimensions[i])) return false;
  }
  return true;
}

void RoomSpec::validate() const {
  for (int i = 0; i < 3; ++i) {
    if (!(dimensions[i] > 0.0) || !std::isfinite(dimensions[i])) throw ConfigError("room: dimensions must be positive");
  }
  if (!(reflection_coeff >= 0.0 && reflection_coeff <= 1.0)) throw ConfigError("room: reflection_coeff must lie in [0, 1]");
  if (max_order < 0) throw ConfigError("room: max_order must be >= 0");
  if (!(carrier_hz > 0.0)) throw ConfigError("room: carrier_hz must be positive");
  if (num_subcarriers < 1) throw ConfigError("room: num_subcarriers must be >= 1");
  if (!(subcarrier_spacing_hz > 0.0)) throw ConfigError("room: subcarrier_spacing_hz must be positive");
  if (subcarrier_hz(0) <= 0.0) throw ConfigError("room: lowest subcarrier frequency must be positive");
}

RoomSpec preset_room(const std::string& name) {
  RoomSpec room;
  if (name == "bedroom") {
    room.dimensions = {4.0, 3.5, 2.6};
    room.reflection_coeff = 0.5;
  } else if (name == "conference") {
    room.dimensions = {8.0, 5.0, 3.0};
    room.reflection_coeff = 0.6;
  } else if (name == "office") {
    room.dimensions = {6.0, 4.5, 2.8};
    room.reflection_coeff = 0.7;
  } else {
    throw ConfigError("unknown room preset '" + name + "' (expected bedroom, conference or office)");
  }
  return room;
}

std::vector<std::string> preset_names() { return {"bedroom", "conference", "office"}; }

std::vector<ImageSource> image_sources(const RoomSpec& room, const Position3& tx, int order) {
  room.validate();
  if (order < 0 || order > room.max_order) {
    throw ConfigError("image_sources: order must lie in [0, max_order]");
  }
  if (!room.contains(tx)) throw DomainError("image_sources: transmitter is not inside the room");

  // Positions are keyed on a 1 nm lattice; exact mirrors of one another
  // collapse onto the same key.
  using Key = std::array<long long, 3>;
  auto key_of = [](const Position3& p) {
    return Key{std::llround(p.x() * 1e9), std::llround(p.y() * 1e9), std::llround(p.z() * 1e9)};
  };
  std::map<Key, bool> seen;
  std::vector<ImageSource> out{{tx, 0}};
  seen[key_of(tx)] = true;
  std::size_t frontier_begin = 0;
  for (int b = 1; b <= order; ++b) {
    const std::size_t frontier_end = out.size();
    for (std::size_t i = frontier_begin; i < frontier_end; ++i) {
      for (int axis = 0; axis < 3; ++axis) {
        for (double wall : {0.0, room.dimensions[axis]}) {
          Position3 p = out[i].position;
          p[axis] = 2.0 * wall - p[axis];
          if (seen.emplace(key_of(p), true).second) out.push_back({p, b});
        }
      }
    }
    frontier_begin = frontier_end;
  }
  return out;
}

Channel synth_channel(const RoomSpec& room, const Position3& tx, const Position3& rx) {
  if (!room.contains(rx)) throw DomainError("synth_channel: receiver is not inside the room");
  if ((tx - rx).norm() == 0.0) throw DomainError("synth_channel: transmitter and receiver coincide");
  const auto images = image_sources(room, tx, room.max_order);
  Channel ch;
  ch.h.assign(static_cast<std::size_t>(room.num_subcarriers), Complex(0.0, 0.0));
  for (const auto& img : images) {
    const double gain = std::pow(room.reflection_coeff, img.bounces);
    if (gain == 0.0) continue;
    const double d = (img.position - rx).norm();
    for (int k = 0; k < room.num_subcarriers; ++k) {
      const double f = room.subcarrier_hz(k);
      const double amplitude = gain * kSpeedOfLight / (4.0 * kPi * d * f);
      ch.h[static_cast<std::size_t>(k)] += std::polar(amplitude, -2.0 * kPi * d * f / kSpeedOfLight);
    }
  }
  return ch;
}

Eigen::MatrixXd synth_spectrum(const RoomSpec& room, const Position3& tx, const Position3& rx,
                               const DirectionGrid& grid) {
  if (!room.contains(rx)) throw DomainError("synth_spectrum: receiver is not inside the room");
  if ((tx - rx).norm() == 0.0) throw DomainError("synth_spectrum: transmitter and receiver coincide");
  std::vector<Complex> cells(grid.size(), Complex(0.0, 0.0));
  const double f = room.carrier_hz;
  for (const auto& img : image_sources(room, tx, room.max_order)) {
    const double gain = std::pow(room.reflection_coeff, img.bounces);
    if (gain == 0.0) continue;
    const Eigen::Vector3d v = img.position - rx;
    const double d = v.norm();
    const auto cell = grid.cell_of(v / d);
    if (!cell) continue;
    cells[*cell] += std::polar(gain * kSpeedOfLight / (4.0 * kPi * d * f), -2.0 * kPi * d * f / kSpeedOfLight);
  }
  Eigen::MatrixXd power(grid.elevation_bins, grid.azimuth_bins);
  for (int e = 0; e < grid.elevation_bins; ++e) {
    for (int a = 0; a < grid.azimuth_bins; ++a) {
      power(e, a) = std::norm(cells[static_cast<std::size_t>(e * grid.azimuth_bins + a)]);
    }
  }
  const double peak = power.maxCoeff();
  if (peak > 0.0) power /= peak;
  return power;
}

SceneConfig scene_for_room(const RoomSpec& room, const SceneConfig& base) {
  SceneConfig scene = base;
  scene.bounds_min = Position3::Zero();
  scene.bounds_max = room.dimensions;
  scene.carrier_hz = room.carrier_hz;
  scene.num_subcarriers = room.num_subcarriers;
  scene.subcarrier_spacing_hz = room.subcarrier_spacing_hz;
  return scene;
}

namespace {

constexpr std::uint64_t kNoiseStream = 0x6e6f697365ull;
constexpr int kMaxPlacementTries = 10000;

Position3 draw_position(const RoomSpec& room, double margin, Rng& rng) {
  Position3 p;
  for (int i = 0; i < 3; ++i) p[i] = rng.uniform(margin, room.dimensions[i] - margin);
  return p;
}

}  // namespace

std::vector<ChannelRecord> generate_dataset(const RoomSpec& room, const DatasetOptions& options) {
  room.validate();
  if (options.num_tx < 1 || options.num_rx < 1) throw ConfigError("generate_dataset: counts must be >= 1");
  if (options.margin < 0.0 || options.min_separation < 0.0) {
    throw ConfigError("generate_dataset: margin and min_separation must be >= 0");
  }
  for (int i = 0; i < 3; ++i) {
    if (!(room.dimensions[i] > 2.0 * options.margin)) {
      throw ConfigError("generate_dataset: room is too small for a wall margin of " + std::to_string(options.margin) + " m");
    }
  }
  if (options.noise_db && !std::isfinite(*options.noise_db)) throw ConfigError("generate_dataset: noise_db must be finite");

  std::optional<DirectionGrid> grid;
  if (options.task == Task::kSpectrum) {
    if (options.azimuth_bins < 1 || options.elevation_bins < 1) throw ConfigError("generate_dataset: empty direction grid");
    grid = DirectionGrid::make(options.azimuth_bins, options.elevation_bins, options.full_sphere);
  }

  Rng placement(options.seed);
  std::vector<Position3> rx(static_cast<std::size_t>(options.num_rx));
  for (auto& p : rx) p = draw_position(room, options.margin, placement);
  std::vector<Position3> tx(static_cast<std::size_t>(options.num_tx));
  for (auto& p : tx) {
    int tries = 0;
    for (;;) {
      p = draw_position(room, options.margin, placement);
      bool ok = true;
      for (const auto& r : rx) ok = ok && (p - r).norm() >= options.min_separation;
      if (ok) break;
      if (++tries >= kMaxPlacementTries) {
        throw ConfigError("generate_dataset: cannot place transmitters at the requested separation");
      }
    }
  }

  std::vector<ChannelRecord> records;
  records.reserve(rx.size() * tx.size());
  std::uint64_t index = 0;
  for (std::size_t r = 0; r < rx.size(); ++r) {
    for (std::size_t t = 0; t < tx.size(); ++t, ++index) {
      ChannelRecord rec;
      rec.rx_position = rx[r];
      rec.tx_position = tx[t];
      rec.tags["rx"] = "rx" + std::to_string(r);
      rec.tags["tx"] = "tx" + std::to_string(t);

      if (options.task == Task::kSpectrum) {
        rec.spectrum = synth_spectrum(room, tx[t], rx[r], *grid);
        records.push_back(std::move(rec));
        continue;
      }

      Channel h = synth_channel(room, tx[t], rx[r]);
      if (options.noise_db) {
        double power = 0.0;
        for (const auto& v : h.h) power += std::norm(v);
        power /= static_cast<double>(h.size());
        const double sigma = std::sqrt(power / std::pow(10.0, *options.noise_db / 10.0) / 2.0);
        Rng noise = Rng::derive(options.seed ^ kNoiseStream, index);
        for (auto& v : h.h) {
          const double re = noise.normal();
          const double im = noise.normal();
          v += Complex(sigma * re, sigma * im);
        }
      }
      const Complex mean = mean_response(h);
      rec.rssi_db = std::abs(mean) > 0.0 ? std::max(rssi_db(mean), kRssiFloorDb) : kRssiFloorDb;
      if (options.task == Task::kCsi) rec.h = std::move(h);
      records.push_back(std::move(rec));
    }
  }
  return records;
}

}  // namespace nerfapt
