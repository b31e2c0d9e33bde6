// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "nerfapt/autodiff.hpp"
#include "nerfapt/core.hpp"
#include "nerfapt/random.hpp"
#include "nerfapt/scene.hpp"

namespace nerfapt {

class RadianceFieldModel;

/// Regular azimuth × elevation grid of arrival directions. Cell index is
/// elevation_row · azimuth_bins + azimuth_column.
struct DirectionGrid {
  int azimuth_bins = 1;
  int elevation_bins = 1;
  bool full_sphere = false;
  std::vector<Eigen::Vector3d> directions;

  static DirectionGrid make(int azimuth_bins, int elevation_bins, bool full_sphere = false);
  static DirectionGrid from_scene(const SceneConfig& scene) {
    return make(scene.azimuth_bins, scene.elevation_bins, scene.full_sphere);
  }
  std::size_t size() const { return directions.size(); }
  /// Cell containing `direction`, or nullopt outside the covered elevations.
  std::optional<std::size_t> cell_of(const Eigen::Vector3d& direction) const;
};

/// Samples along one ray, nearest to the origin first.
struct RaySamples {
  Eigen::Matrix3Xd positions;
  Eigen::VectorXd distances;
};

/// Distances r_n = n·d_max/N (deterministic) or uniformly jittered within
/// ((n-1)·d_max/N, n·d_max/N] (when `stratify` is given). r = 0 is never
/// sampled. Throws DomainError for zero or non-unit directions.
RaySamples sample_ray(const Position3& origin, const Eigen::Vector3d& direction, int n_samples,
                      double d_max, Rng* stratify = nullptr);

/// Rays from one origin over every direction of a grid.
struct RayBatch {
  Position3 rx_position;
  Eigen::Matrix3Xd directions;        // 3 × rays
  Eigen::Matrix3Xd sample_positions;  // 3 × (rays · N), ray-major
  Eigen::MatrixXd radial_distances;   // N × rays
  int samples_per_ray = 0;

  int rays() const { return static_cast<int>(directions.cols()); }
};

RayBatch make_ray_batch(const Position3& origin, const DirectionGrid& grid, int n_samples, double d_max,
                        Rng* stratify = nullptr);

/// Σ_n exp(-Σ_{m<n} δ_m) · s_n, accumulated front to back.
Complex accumulate_ray(std::span<const Complex> delta, std::span<const Complex> s);

/// Gradients of a real loss through accumulate_ray. Complex gradients use the
/// convention ∂L/∂Re + j·∂L/∂Im; `grad_out` is that quantity for the output.
struct RayGradient {
  std::vector<Complex> delta;
  std::vector<Complex> s;
};
RayGradient accumulate_ray_backward(std::span<const Complex> delta, std::span<const Complex> s,
                                    Complex grad_out);

/// Differentiable batch form. `delta_re`/`delta_im` are 1 × (rays·N);
/// `radiance` is 2K × (rays·N) holding K log-amplitudes then K phases.
/// Returns 2K × rays: K real parts then K imaginary parts.
ad::Var accumulate_rays(const ad::Var& delta_re, const ad::Var& delta_im, const ad::Var& radiance);

/// Complex mean over groups of `group` consecutive columns of a 2K × (n·group)
/// ray result.
ad::Var mean_over_directions(const ad::Var& rays, int group);

struct LinkQuery {
  Position3 rx;
  Position3 tx;
};

enum class SamplingMode { kDeterministic, kStratified };

/// Differentiable rendering of a batch of links.
struct RenderVars {
  ad::Var per_direction;  // 2K × (links · grid)
  ad::Var channel;        // 2K × links
};

RenderVars render_links(const RadianceFieldModel& model, std::span<const LinkQuery> links,
                        const DirectionGrid& grid, SamplingMode mode = SamplingMode::kDeterministic,
                        Rng* rng = nullptr);

struct RenderResult {
  Eigen::MatrixXcd per_direction;  // K × grid cells
  Channel channel;
  double rssi = 0.0;               // dB; -inf when the channel is exactly zero
  Eigen::MatrixXd spectrum;        // elevation × azimuth, max-normalized power
};

RenderResult render(const Position3& rx, const Position3& tx, const DirectionGrid& grid,
                    const RadianceFieldModel& model);

/// Unpacks a 2K-row column (re block then im block) into complex values.
std::vector<Complex> unpack_complex_column(const ad::Matrix& m, Eigen::Index col);

/// Max-normalized power over the grid, laid out elevation × azimuth.
Eigen::MatrixXd spectrum_from_directions(const Eigen::MatrixXcd& per_direction, const DirectionGrid& grid);

}  // namespace nerfapt
