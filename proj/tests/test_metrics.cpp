// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "nerfapt/errors.hpp"
#include "nerfapt/metrics.hpp"
#include "nerfapt/random.hpp"
#include "oracles.hpp"

using namespace nerfapt;

namespace {

Eigen::MatrixXd random_image(Rng& rng, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform();
  return m;
}

std::vector<Complex> random_csi(Rng& rng, std::size_t n) {
  std::vector<Complex> v(n);
  for (auto& z : v) z = {rng.normal(), rng.normal()};
  return v;
}

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("median_rmse examples") {
    const std::vector<double> truth{1.0, 2.0, 3.0};
    const std::vector<std::string> one{"a", "a", "a"};
    CHECK(median_rmse(truth, truth, one) == 0.0);

    const std::vector<double> p2{3.0, 4.0};
    const std::vector<double> t2{0.0, 0.0};
    const std::vector<std::string> g2{"a", "a"};
    CHECK(median_rmse(p2, t2, g2) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-15));

    const std::vector<double> p3{1.0, 5.0, 9.0};
    const std::vector<double> t3{0.0, 0.0, 0.0};
    const std::vector<std::string> g3{"x", "y", "z"};
    CHECK(median_rmse(p3, t3, g3) == 5.0);

    const std::vector<double> p4{1.0, 3.0};
    const std::vector<std::string> g4{"x", "y"};
    CHECK(median_rmse(p4, t2, g4) == 2.0);

    CHECK_THROWS_AS(median_rmse(std::vector<double>{}, std::vector<double>{}, std::vector<std::string>{}), DomainError);
    CHECK_THROWS_AS(median_rmse(p3, t2, g3), DomainError);
  }

  TEST_CASE("median_rmse is invariant under reordering") {
    Rng rng(31);
    std::vector<double> pred(40), truth(40);
    std::vector<std::string> groups(40);
    for (std::size_t i = 0; i < 40; ++i) {
      pred[i] = rng.uniform(-80, -40);
      truth[i] = rng.uniform(-80, -40);
      groups[i] = "g" + std::to_string(rng.below(6));
    }
    const double base = median_rmse(pred, truth, groups);
    for (int trial = 0; trial < 20; ++trial) {
      for (std::size_t i = 39; i > 0; --i) {
        const std::size_t j = rng.below(i + 1);
        std::swap(pred[i], pred[j]);
        std::swap(truth[i], truth[j]);
        std::swap(groups[i], groups[j]);
      }
      CHECK(median_rmse(pred, truth, groups) == doctest::Approx(base).epsilon(1e-13));
    }
  }

  TEST_CASE("snr_db examples") {
    Rng rng(5);
    const auto truth = random_csi(rng, 8);
    CHECK(snr_db(truth, truth) == std::numeric_limits<double>::infinity());
    const std::vector<Complex> zeros(8, Complex(0.0, 0.0));
    CHECK(snr_db(zeros, truth) == doctest::Approx(0.0).epsilon(1e-15));
    const auto pred = random_csi(rng, 8);
    CHECK(snr_db(pred, truth) == doctest::Approx(oracle::snr_db(pred, truth)).epsilon(1e-13));
    CHECK_THROWS_AS(snr_db(zeros, zeros), DomainError);
    CHECK_THROWS_AS(snr_db(std::vector<Complex>(3), truth), DomainError);
  }

  TEST_CASE("snr_db of real matrices") {
    Eigen::MatrixXd t(2, 2);
    t << 1, 2, 3, 4;
    const Eigen::MatrixXd p = t * 1.1;
    CHECK(snr_db(p, t) == doctest::Approx(20.0).epsilon(1e-12));
    CHECK_THROWS_AS(snr_db(Eigen::MatrixXd(2, 3), t), DomainError);
  }

  TEST_CASE("snr_db falls as noise grows") {
    Rng rng(6);
    const auto truth = random_csi(rng, 256);
    const auto noise = random_csi(rng, 256);
    double last = std::numeric_limits<double>::infinity();
    for (double level : {0.01, 0.05, 0.2, 1.0, 3.0}) {
      std::vector<Complex> pred(truth);
      for (std::size_t i = 0; i < pred.size(); ++i) pred[i] += level * noise[i];
      const double s = snr_db(pred, truth);
      CHECK(s < last);
      last = s;
    }
  }

  TEST_CASE("ssim identity and symmetry") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::MatrixXd x = random_image(rng, 9 + trial % 4, 12);
      const Eigen::MatrixXd y = random_image(rng, 9 + trial % 4, 12);
      CHECK(ssim(x, x) == 1.0);
      CHECK(std::abs(ssim(x, y) - ssim(y, x)) <= 1e-12);
      CHECK(ssim(x, y) < 1.0);
    }
  }

  TEST_CASE("ssim of constant images has a closed form") {
    for (auto [a, b] : {std::pair{0.2, 0.7}, std::pair{0.0, 1.0}, std::pair{0.5, 0.5}, std::pair{0.9, 0.1}}) {
      const Eigen::MatrixXd x = Eigen::MatrixXd::Constant(8, 10, a);
      const Eigen::MatrixXd y = Eigen::MatrixXd::Constant(8, 10, b);
      const double expected = (2 * a * b + kC1) / (a * a + b * b + kC1);
      CHECK(std::abs(ssim(x, y) - expected) <= 1e-12);
    }
  }

  TEST_CASE("ssim matches the sliding-window oracle") {
    Rng rng(9);
    const Eigen::MatrixXd x = random_image(rng, 8, 8);
    const Eigen::MatrixXd y = random_image(rng, 8, 8);
    CHECK(std::abs(ssim(x, y) - oracle::ssim(x, y, 7, kC1, kC2)) <= 1e-12);
    SsimOptions three;
    three.window = 3;
    CHECK(std::abs(ssim(x, y, three) - oracle::ssim(x, y, 3, kC1, kC2)) <= 1e-12);
  }

  TEST_CASE("gaussian ssim option") {
    Rng rng(10);
    const Eigen::MatrixXd x = random_image(rng, 10, 10);
    const Eigen::MatrixXd y = random_image(rng, 10, 10);
    SsimOptions g;
    g.gaussian = true;
    CHECK(ssim(x, x, g) == 1.0);
    CHECK(ssim(x, y, g) != ssim(x, y));
  }

  TEST_CASE("ssim input validation") {
    const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(8, 8);
    CHECK_THROWS_AS(ssim(x, Eigen::MatrixXd::Zero(8, 9)), DomainError);
    SsimOptions even;
    even.window = 4;
    CHECK_THROWS_AS(ssim(x, x, even), DomainError);
    CHECK_THROWS_AS(ssim(Eigen::MatrixXd::Zero(5, 9), Eigen::MatrixXd::Zero(5, 9)), DomainError);
  }

  TEST_CASE("fitting_window") {
    CHECK(fitting_window(9, 36) == 7);
    CHECK(fitting_window(4, 8) == 3);
    CHECK(fitting_window(6, 6) == 5);
    CHECK(fitting_window(1, 5) == 1);
  }

  TEST_CASE("metric names") {
    CHECK(to_string(MetricName::kMedianRmseDb) == "median_rmse_db");
    CHECK(to_string(MetricName::kSnrDb) == "snr_db");
    CHECK(to_string(MetricName::kSsim) == "ssim");
  }
}
