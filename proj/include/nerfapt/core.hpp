// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <complex>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace nerfapt {

using Complex = std::complex<double>;
using Position3 = Eigen::Vector3d;

/// Amplitude/phase view of a complex signal sample. Phase lies in [0, 2*pi).
struct Polar {
  double amplitude = 0.0;
  double phase = 0.0;
};

Complex from_polar(double amplitude, double phase);
Polar to_polar(Complex x);

/// One propagation path: amplitude scaling and phase rotation applied to the
/// transmitted signal.
struct PathComponent {
  double delta_a = 1.0;
  double delta_theta = 0.0;
};

/// Frequency response, one complex value per subcarrier.
struct Channel {
  std::vector<Complex> h;

  std::size_t size() const { return h.size(); }
  bool operator==(const Channel&) const = default;
};

/// Sum of ΔA·exp(jΔθ) over all paths.
Complex channel_from_paths(std::span<const PathComponent> paths);

/// Transmitted sample `x` after propagation over `paths`.
Complex received_signal(Complex x, std::span<const PathComponent> paths);

/// Received power 10·log10(|h|²) in dB. Throws DomainError for h == 0.
double rssi_db(Complex h);

/// Complex mean over subcarriers.
Complex mean_response(const Channel& channel);

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kRssiFloorDb = -150.0;

}  // namespace nerfapt
