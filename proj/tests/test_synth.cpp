// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <tuple>

#include "nerfapt/errors.hpp"
#include "nerfapt/raytrace.hpp"
#include "nerfapt/synth.hpp"

using namespace nerfapt;

namespace {

// Per axis, images sit at 2nL + x (|2n| reflections) or 2nL - x (|2n - 1|).
std::vector<std::pair<double, int>> axis_images(double x, double len, int order) {
  std::vector<std::pair<double, int>> out;
  for (int n = -order; n <= order; ++n) {
    if (std::abs(2 * n) <= order) out.emplace_back(2.0 * n * len + x, std::abs(2 * n));
    if (std::abs(2 * n - 1) <= order) out.emplace_back(2.0 * n * len - x, std::abs(2 * n - 1));
  }
  return out;
}

std::vector<std::tuple<long, long, long, int>> lattice_oracle(const RoomSpec& room, const Position3& tx, int order) {
  std::vector<std::tuple<long, long, long, int>> out;
  const auto xs = axis_images(tx.x(), room.dimensions.x(), order);
  const auto ys = axis_images(tx.y(), room.dimensions.y(), order);
  const auto zs = axis_images(tx.z(), room.dimensions.z(), order);
  for (const auto& [x, bx] : xs)
    for (const auto& [y, by] : ys)
      for (const auto& [z, bz] : zs)
        if (bx + by + bz <= order) out.emplace_back(std::lround(x * 1e6), std::lround(y * 1e6), std::lround(z * 1e6), bx + by + bz);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::tuple<long, long, long, int>> keyed(const std::vector<ImageSource>& images) {
  std::vector<std::tuple<long, long, long, int>> out;
  for (const auto& im : images) {
    out.emplace_back(std::lround(im.position.x() * 1e6), std::lround(im.position.y() * 1e6),
                     std::lround(im.position.z() * 1e6), im.bounces);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Position3 random_inside(Rng& rng, const RoomSpec& room, double margin = 0.1) {
  return {rng.uniform(margin, room.dimensions.x() - margin), rng.uniform(margin, room.dimensions.y() - margin),
          rng.uniform(margin, room.dimensions.z() - margin)};
}

RoomSpec random_room(Rng& rng) {
  RoomSpec room;
  room.dimensions = {rng.uniform(2.0, 9.0), rng.uniform(2.0, 9.0), rng.uniform(2.0, 4.0)};
  room.reflection_coeff = rng.uniform(0.0, 1.0);
  room.max_order = 2;
  room.num_subcarriers = 8;
  return room;
}

}  // namespace

TEST_SUITE("synth") {
  TEST_CASE("image source counts and positions match the lattice oracle") {
    RoomSpec room;
    const Position3 tx(1.0, 1.5, 1.2);
    const std::size_t expected[] = {1, 7, 25, 63};
    for (int order = 0; order <= 3; ++order) {
      const auto images = image_sources(room, tx, order);
      CHECK(images.size() == expected[order]);
      CHECK(keyed(images) == lattice_oracle(room, tx, order));
      for (std::size_t i = 1; i < images.size(); ++i) CHECK(images[i - 1].bounces <= images[i].bounces);
    }
  }

  TEST_CASE("first-order images are the six wall mirrors") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      const RoomSpec room = random_room(rng);
      const Position3 tx = random_inside(rng, room);
      const auto images = image_sources(room, tx, 1);
      REQUIRE(images.size() == 7);
      CHECK(std::count_if(images.begin(), images.end(), [](const ImageSource& s) { return s.bounces == 1; }) == 6);
      for (const auto& im : images) {
        if (im.bounces != 1) continue;
        // Exactly one coordinate differs, and it is mirrored across a wall.
        int moved = 0;
        for (int a = 0; a < 3; ++a) {
          if (std::abs(im.position[a] - tx[a]) > 1e-12) {
            ++moved;
            const bool low = std::abs(im.position[a] + tx[a]) < 1e-9;
            const bool high = std::abs(im.position[a] + tx[a] - 2.0 * room.dimensions[a]) < 1e-9;
            CHECK((low || high));
          }
        }
        CHECK(moved == 1);
      }
    }
  }

  TEST_CASE("higher orders extend lower ones") {
    RoomSpec room;
    const Position3 tx(3.1, 0.4, 2.2);
    for (int order = 1; order <= 3; ++order) {
      const auto lo = keyed(image_sources(room, tx, order - 1));
      const auto hi = keyed(image_sources(room, tx, order));
      CHECK(std::includes(hi.begin(), hi.end(), lo.begin(), lo.end()));
    }
  }

  TEST_CASE("free-space channel closed form") {
    RoomSpec room;
    room.reflection_coeff = 0.0;
    room.num_subcarriers = 4;
    const Position3 tx(1, 1, 1);
    const Position3 rx(3, 2, 1.5);
    const double d = (tx - rx).norm();
    const Channel h = synth_channel(room, tx, rx);
    REQUIRE(h.size() == 4);
    for (int k = 0; k < 4; ++k) {
      const double f = room.subcarrier_hz(k);
      const Complex ref = kSpeedOfLight / (4.0 * kPi * d * f) * std::exp(Complex(0.0, -2.0 * kPi * d * f / kSpeedOfLight));
      CHECK(std::abs(h.h[k] - ref) <= 1e-12 * std::abs(ref));
    }
  }

  TEST_CASE("reflected channel equals the path sum of its images") {
    RoomSpec room;
    room.max_order = 1;
    room.reflection_coeff = 0.4;
    room.num_subcarriers = 3;
    const Position3 tx(0.7, 2.1, 1.1);
    const Position3 rx(2.9, 1.2, 1.9);
    const Channel h = synth_channel(room, tx, rx);
    for (int k = 0; k < 3; ++k) {
      const double f = room.subcarrier_hz(k);
      std::vector<PathComponent> paths;
      for (const auto& im : image_sources(room, tx, 1)) {
        const double d = (im.position - rx).norm();
        paths.push_back({std::pow(0.4, im.bounces) * kSpeedOfLight / (4.0 * kPi * d * f), -2.0 * kPi * d * f / kSpeedOfLight});
      }
      const Complex ref = channel_from_paths(paths);
      CHECK(std::abs(h.h[k] - ref) <= 1e-12 * std::abs(ref));
    }
  }

  TEST_CASE("channels are reciprocal") {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
      const RoomSpec room = random_room(rng);
      const Position3 a = random_inside(rng, room);
      const Position3 b = random_inside(rng, room);
      const Channel ab = synth_channel(room, a, b);
      const Channel ba = synth_channel(room, b, a);
      for (int k = 0; k < room.num_subcarriers; ++k) {
        CHECK(std::abs(ab.h[k] - ba.h[k]) <= 1e-9 * std::max(1.0, std::abs(ab.h[k])));
      }
    }
  }

  TEST_CASE("received power falls with distance in free space") {
    RoomSpec room;
    room.reflection_coeff = 0.0;
    room.dimensions = {20.0, 4.0, 3.0};
    double last = 1e300;
    for (double x = 2.0; x < 19.0; x += 1.0) {
      const double p = std::norm(synth_channel(room, Position3(1, 2, 1.5), Position3(x, 2, 1.5)).h[0]);
      CHECK(p < last);
      last = p;
    }
  }

  TEST_CASE("invalid placements and orders") {
    RoomSpec room;
    CHECK_THROWS_AS(image_sources(room, Position3(-1, 1, 1), 1), DomainError);
    CHECK_THROWS_AS(image_sources(room, Position3(1, 1, 1), 4), ConfigError);
    CHECK_THROWS_AS(synth_channel(room, Position3(1, 1, 1), Position3(1, 1, 1)), DomainError);
    CHECK_THROWS_AS(synth_channel(room, Position3(1, 1, 1), Position3(1, 9, 1)), DomainError);
    CHECK_THROWS_AS(preset_room("attic"), ConfigError);
    room.reflection_coeff = 1.5;
    CHECK_THROWS_AS(room.validate(), ConfigError);
  }

  TEST_CASE("presets are valid distinct rooms") {
    for (const auto& name : preset_names()) {
      CAPTURE(name);
      CHECK_NOTHROW(preset_room(name).validate());
    }
    CHECK(preset_room("bedroom").dimensions != preset_room("office").dimensions);
  }

  TEST_CASE("synthetic spectrum peaks toward the line of sight") {
    RoomSpec room;
    room.reflection_coeff = 0.0;
    const DirectionGrid grid = DirectionGrid::make(36, 9, false);
    const Position3 rx(1.0, 1.0, 1.0);
    const Position3 tx(3.0, 1.0, 1.0);  // azimuth 0, elevation 0
    const Eigen::MatrixXd s = synth_spectrum(room, tx, rx, grid);
    CHECK(s.rows() == 9);
    CHECK(s.cols() == 36);
    CHECK(s.maxCoeff() == doctest::Approx(1.0));
    CHECK(s(0, 0) == doctest::Approx(1.0));
    CHECK(s.sum() == doctest::Approx(1.0));
  }

  TEST_CASE("dataset generation is deterministic and tagged") {
    RoomSpec room = preset_room("bedroom");
    room.num_subcarriers = 4;
    DatasetOptions opt;
    opt.num_tx = 6;
    opt.num_rx = 2;
    opt.seed = 3;
    opt.noise_db = 25.0;
    const auto a = generate_dataset(room, opt);
    const auto b = generate_dataset(room, opt);
    REQUIRE(a.size() == 12);
    CHECK(a == b);
    CHECK(a[0].tags.at("rx") == "rx0");
    CHECK(a[7].tags.at("rx") == "rx1");
    CHECK(a[7].tags.at("tx") == "tx1");
    for (const auto& r : a) {
      CHECK(r.h.has_value());
      CHECK((r.rx_position - r.tx_position).norm() >= opt.min_separation);
      for (int i = 0; i < 3; ++i) {
        CHECK(r.tx_position[i] >= opt.margin);
        CHECK(r.tx_position[i] <= room.dimensions[i] - opt.margin);
      }
    }
    opt.seed = 4;
    CHECK_FALSE(generate_dataset(room, opt) == a);
  }

  TEST_CASE("rssi agrees with the stored channel") {
    RoomSpec room = preset_room("office");
    room.num_subcarriers = 8;
    DatasetOptions opt;
    opt.num_tx = 10;
    opt.seed = 8;
    opt.task = Task::kRssi;
    for (const auto& r : generate_dataset(room, opt)) {
      REQUIRE(r.rssi_db.has_value());
      const Channel clean = synth_channel(room, r.tx_position, r.rx_position);
      CHECK(*r.rssi_db == doctest::Approx(rssi_db(mean_response(clean))).epsilon(1e-12));
    }
  }

  TEST_CASE("injected noise reaches the requested SNR") {
    RoomSpec room = preset_room("conference");
    room.num_subcarriers = 8;
    room.max_order = 1;
    DatasetOptions opt;
    opt.num_tx = 10000;
    opt.seed = 21;
    opt.noise_db = 20.0;
    const auto noisy = generate_dataset(room, opt);
    opt.noise_db.reset();
    const auto clean = generate_dataset(room, opt);
    REQUIRE(noisy.size() == clean.size());
    double ratio_sum = 0.0;
    for (std::size_t i = 0; i < noisy.size(); ++i) {
      REQUIRE(noisy[i].tx_position == clean[i].tx_position);
      double signal = 0.0;
      double noise = 0.0;
      for (int k = 0; k < room.num_subcarriers; ++k) {
        signal += std::norm(clean[i].h->h[k]);
        noise += std::norm(noisy[i].h->h[k] - clean[i].h->h[k]);
      }
      ratio_sum += noise / signal;
    }
    const double snr = -10.0 * std::log10(ratio_sum / static_cast<double>(noisy.size()));
    CHECK(std::abs(snr - 20.0) < 0.5);
  }

  TEST_CASE("spectrum task stores spectra only") {
    RoomSpec room = preset_room("bedroom");
    DatasetOptions opt;
    opt.num_tx = 3;
    opt.task = Task::kSpectrum;
    opt.azimuth_bins = 12;
    opt.elevation_bins = 3;
    for (const auto& r : generate_dataset(room, opt)) {
      CHECK_FALSE(r.h.has_value());
      REQUIRE(r.spectrum.has_value());
      CHECK(r.spectrum->rows() == 3);
      CHECK(r.spectrum->cols() == 12);
      CHECK(r.spectrum->maxCoeff() == doctest::Approx(1.0));
    }
  }

  TEST_CASE("dataset option validation") {
    RoomSpec room;
    DatasetOptions opt;
    opt.margin = 2.0;
    CHECK_THROWS_AS(generate_dataset(room, opt), ConfigError);
    opt = {};
    opt.num_tx = 0;
    CHECK_THROWS_AS(generate_dataset(room, opt), ConfigError);
  }
}
