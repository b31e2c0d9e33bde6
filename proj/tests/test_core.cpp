// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "nerfapt/core.hpp"
#include "nerfapt/errors.hpp"
#include "nerfapt/random.hpp"

using namespace nerfapt;

namespace {

// Separate code path: sums real and imaginary parts explicitly.
Complex paths_oracle(const std::vector<PathComponent>& paths) {
  double re = 0.0;
  double im = 0.0;
  for (const auto& p : paths) {
    re += p.delta_a * std::cos(p.delta_theta);
    im += p.delta_a * std::sin(p.delta_theta);
  }
  return {re, im};
}

std::vector<PathComponent> random_paths(Rng& rng, int n) {
  std::vector<PathComponent> paths;
  for (int i = 0; i < n; ++i) paths.push_back({rng.uniform(0.0, 2.0), rng.uniform(-10.0, 10.0)});
  return paths;
}

}  // namespace

TEST_SUITE("core") {
  TEST_CASE("single unattenuated path is the identity channel") {
    const std::vector<PathComponent> paths{{1.0, 0.0}};
    const Complex h = channel_from_paths(paths);
    CHECK(h.real() == 1.0);
    CHECK(h.imag() == 0.0);
  }

  TEST_CASE("opposite phases cancel") {
    const std::vector<PathComponent> paths{{0.5, 0.0}, {0.5, kPi}};
    CHECK(std::abs(channel_from_paths(paths)) < 1e-15);
  }

  TEST_CASE("random paths match the component-wise oracle") {
    Rng rng(42);
    const auto paths = random_paths(rng, 5);
    const Complex h = channel_from_paths(paths);
    const Complex o = paths_oracle(paths);
    CHECK(std::abs(h - o) < 1e-12);
  }

  TEST_CASE("empty path list and negative attenuation are rejected") {
    CHECK_THROWS_AS(channel_from_paths({}), DomainError);
    CHECK_THROWS_AS(received_signal(Complex(1, 0), {}), DomainError);
    const std::vector<PathComponent> bad{{-0.1, 0.0}};
    CHECK_THROWS_AS(channel_from_paths(bad), DomainError);
  }

  TEST_CASE("received signal scales and rotates the transmitted sample") {
    const std::vector<PathComponent> unit{{1.0, 0.0}};
    CHECK(std::abs(received_signal(from_polar(1.0, 0.0), unit) - Complex(1.0, 0.0)) < 1e-15);

    const std::vector<PathComponent> half{{0.5, 0.0}};
    const Polar y = to_polar(received_signal(from_polar(2.0, kPi / 2), half));
    CHECK(y.amplitude == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(y.phase == doctest::Approx(kPi / 2).epsilon(1e-12));

    Rng rng(7);
    const auto paths = random_paths(rng, 3);
    const Complex x = from_polar(1.0, 0.3);
    CHECK(std::abs(received_signal(x, paths) - x * paths_oracle(paths)) < 1e-12);
  }

  TEST_CASE("rssi closed forms") {
    CHECK(rssi_db(Complex(1.0, 0.0)) == doctest::Approx(0.0));
    CHECK(rssi_db(Complex(10.0, 0.0)) == doctest::Approx(20.0).epsilon(1e-14));
    // 20·log10(0.5) = -6.02059991327962390427...
    CHECK(std::abs(rssi_db(Complex(0.3, 0.4)) - (-6.0205999132796239)) < 1e-12);
    CHECK_THROWS_AS(rssi_db(Complex(0.0, 0.0)), DomainError);
  }

  TEST_CASE("polar round trip keeps phase in [0, 2pi)") {
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
      const double a = rng.uniform(1e-3, 10.0);
      const double t = rng.uniform(-20.0, 20.0);
      const Polar p = to_polar(from_polar(a, t));
      double expected = std::fmod(t, 2.0 * kPi);
      if (expected < 0) expected += 2.0 * kPi;
      CHECK(p.amplitude == doctest::Approx(a).epsilon(1e-12));
      const double diff = std::remainder(p.phase - expected, 2.0 * kPi);
      CHECK(std::abs(diff) < 1e-9);
      CHECK(p.phase >= 0.0);
      CHECK(p.phase < 2.0 * kPi);
    }
  }

  TEST_CASE("linearity, phase invariance of power, and the channel ratio") {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
      const auto a = random_paths(rng, 1 + static_cast<int>(rng.below(6)));
      const auto b = random_paths(rng, 1 + static_cast<int>(rng.below(6)));
      std::vector<PathComponent> both = a;
      both.insert(both.end(), b.begin(), b.end());
      CHECK(std::abs(channel_from_paths(both) - (channel_from_paths(a) + channel_from_paths(b))) < 1e-9);

      const Complex h = channel_from_paths(a);
      if (std::abs(h) > 1e-6) {
        const double phi = rng.uniform(0.0, 2.0 * kPi);
        CHECK(std::abs(rssi_db(h) - rssi_db(h * std::polar(1.0, phi))) < 1e-9);
      }
      const Complex x = from_polar(rng.uniform(0.1, 3.0), rng.uniform(0.0, 6.0));
      CHECK(std::abs(received_signal(x, a) / x - h) < 1e-9);
    }
  }

  TEST_CASE("mean response over subcarriers") {
    Channel c{{Complex(1, 1), Complex(3, -1)}};
    CHECK(mean_response(c) == Complex(2, 0));
    CHECK_THROWS_AS(mean_response(Channel{}), DomainError);
  }
}
