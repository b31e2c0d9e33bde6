// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "nerfapt/encoding.hpp"
#include "nerfapt/errors.hpp"
#include "nerfapt/random.hpp"

using namespace nerfapt;

TEST_SUITE("encoding") {
  TEST_CASE("zero input with two bands") {
    const std::vector<double> x{0.0};
    const auto e = positional_encode(x, {2, true});
    REQUIRE(e.size() == 5);
    const std::vector<double> expected{0, 0, 1, 0, 1};
    for (std::size_t i = 0; i < e.size(); ++i) CHECK(e[i] == expected[i]);
  }

  TEST_CASE("output dimension formula") {
    CHECK(EncoderConfig{10, true}.output_dim(3) == 63);
    Rng rng(1);
    for (int d = 1; d <= 4; ++d) {
      for (int l = 0; l <= 6; ++l) {
        for (bool inc : {false, true}) {
          std::vector<double> x(static_cast<std::size_t>(d));
          for (auto& v : x) v = rng.uniform(-1, 1);
          const EncoderConfig cfg{l, inc};
          CHECK(static_cast<int>(positional_encode(x, cfg).size()) == d * (2 * l + (inc ? 1 : 0)));
          CHECK(cfg.output_dim(d) == d * (2 * l + (inc ? 1 : 0)));
        }
      }
    }
  }

  TEST_CASE("quarter input, one band, no passthrough") {
    const std::vector<double> x{0.25};
    const auto e = positional_encode(x, {1, false});
    REQUIRE(e.size() == 2);
    CHECK(e[0] == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
    CHECK(e[1] == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  }

  TEST_CASE("layout interleaves components within each band") {
    const std::vector<double> x{0.1, -0.4, 0.7};
    const auto e = positional_encode(x, {3, true});
    for (int k = 0; k < 3; ++k) {
      const double w = std::ldexp(M_PI, k);
      for (int c = 0; c < 3; ++c) {
        CHECK(e[static_cast<std::size_t>(3 + k * 6 + c)] == doctest::Approx(std::sin(w * x[c])));
        CHECK(e[static_cast<std::size_t>(3 + k * 6 + 3 + c)] == doctest::Approx(std::cos(w * x[c])));
      }
    }
    for (int c = 0; c < 3; ++c) CHECK(e[static_cast<std::size_t>(c)] == x[static_cast<std::size_t>(c)]);
  }

  TEST_CASE("component bounds") {
    Rng rng(2);
    for (int t = 0; t < 200; ++t) {
      std::vector<double> x{rng.uniform(-3, 3), rng.uniform(-3, 3)};
      for (double v : positional_encode(x, {5, false})) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
      }
      const double lo = std::min({x[0], x[1], -1.0});
      const double hi = std::max({x[0], x[1], 1.0});
      for (double v : positional_encode(x, {5, true})) {
        CHECK(v >= lo);
        CHECK(v <= hi);
      }
    }
  }

  TEST_CASE("column form matches the vector form") {
    Eigen::MatrixXd x(3, 4);
    x.setRandom();
    const EncoderConfig cfg{4, true};
    const Eigen::MatrixXd m = positional_encode_columns(x, cfg);
    REQUIRE(m.rows() == cfg.output_dim(3));
    for (int c = 0; c < 4; ++c) {
      const std::vector<double> col{x(0, c), x(1, c), x(2, c)};
      const auto e = positional_encode(col, cfg);
      for (int r = 0; r < m.rows(); ++r) CHECK(m(r, c) == e[static_cast<std::size_t>(r)]);
    }
  }

  TEST_CASE("no collisions among random points in the unit cube") {
    Rng rng(5);
    const EncoderConfig cfg{1, false};
    int collisions = 0;
    for (int t = 0; t < 100000; ++t) {
      std::vector<double> a{rng.uniform(), rng.uniform()};
      std::vector<double> b{rng.uniform(), rng.uniform()};
      if (a == b) continue;
      const auto ea = positional_encode(a, cfg);
      const auto eb = positional_encode(b, cfg);
      if (ea == eb) ++collisions;
    }
    CHECK(collisions == 0);
  }

  TEST_CASE("non-finite input is rejected") {
    const std::vector<double> x{std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS_AS(positional_encode(x, {}), DomainError);
    const std::vector<double> y{std::numeric_limits<double>::infinity()};
    CHECK_THROWS_AS(positional_encode(y, {}), DomainError);
  }
}
