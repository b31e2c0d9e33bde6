// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "nerfapt/raytrace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nerfapt/errors.hpp"
#include "nerfapt/fields.hpp"

namespace nerfapt {

DirectionGrid DirectionGrid::make(int azimuth_bins, int elevation_bins, bool full_sphere) {
  if (azimuth_bins < 1 || elevation_bins < 1) throw ConfigError("direction grid: bins must be >= 1");
  DirectionGrid grid;
  grid.azimuth_bins = azimuth_bins;
  grid.elevation_bins = elevation_bins;
  grid.full_sphere = full_sphere;
  const double el_lo = full_sphere ? -kPi / 2.0 : 0.0;
  const double el_span = full_sphere ? kPi : kPi / 2.0;
  grid.directions.reserve(static_cast<std::size_t>(azimuth_bins) * elevation_bins);
  for (int e = 0; e < elevation_bins; ++e) {
    const double el = el_lo + (e + 0.5) * el_span / elevation_bins;
    for (int a = 0; a < azimuth_bins; ++a) {
      const double az = (a + 0.5) * 2.0 * kPi / azimuth_bins;
      grid.directions.emplace_back(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    }
  }
  return grid;
}

std::optional<std::size_t> DirectionGrid::cell_of(const Eigen::Vector3d& direction) const {
  const double norm = direction.norm();
  if (norm == 0.0) return std::nullopt;
  const Eigen::Vector3d d = direction / norm;
  double az = std::atan2(d.y(), d.x());
  if (az < 0.0) az += 2.0 * kPi;
  const double el = std::asin(std::clamp(d.z(), -1.0, 1.0));
  const double el_lo = full_sphere ? -kPi / 2.0 : 0.0;
  const double el_span = full_sphere ? kPi : kPi / 2.0;
  if (el < el_lo) return std::nullopt;
  const int a = std::min(azimuth_bins - 1, static_cast<int>(az / (2.0 * kPi) * azimuth_bins));
  const int e = std::min(elevation_bins - 1, static_cast<int>((el - el_lo) / el_span * elevation_bins));
  return static_cast<std::size_t>(e) * azimuth_bins + a;
}

RaySamples sample_ray(const Position3& origin, const Eigen::Vector3d& direction, int n_samples,
                      double d_max, Rng* stratify) {
  if (n_samples < 1) throw ConfigError("sample_ray: n_samples must be >= 1");
  if (!(d_max > 0.0)) throw ConfigError("sample_ray: d_max must be positive");
  const double norm = direction.norm();
  if (norm == 0.0) throw DomainError("sample_ray: zero direction");
  if (std::abs(norm - 1.0) > 1e-6) throw DomainError("sample_ray: direction must be a unit vector");

  RaySamples out;
  out.distances.resize(n_samples);
  out.positions.resize(3, n_samples);
  const double bin = d_max / n_samples;
  for (int n = 0; n < n_samples; ++n) {
    // 1 - u lies in (0, 1], so every sample stays inside its half-open bin.
    const double offset = stratify ? 1.0 - stratify->uniform() : 1.0;
    const double r = (n + offset) * bin;
    out.distances[n] = r;
    out.positions.col(n) = origin + r * direction;
  }
  return out;
}

RayBatch make_ray_batch(const Position3& origin, const DirectionGrid& grid, int n_samples, double d_max,
                        Rng* stratify) {
  RayBatch batch;
  const auto rays = static_cast<Eigen::Index>(grid.size());
  batch.rx_position = origin;
  batch.samples_per_ray = n_samples;
  batch.directions.resize(3, rays);
  batch.sample_positions.resize(3, rays * n_samples);
  batch.radial_distances.resize(n_samples, rays);
  for (Eigen::Index r = 0; r < rays; ++r) {
    const auto& dir = grid.directions[static_cast<std::size_t>(r)];
    RaySamples s = sample_ray(origin, dir, n_samples, d_max, stratify);
    batch.directions.col(r) = dir;
    batch.sample_positions.middleCols(r * n_samples, n_samples) = s.positions;
    batch.radial_distances.col(r) = s.distances;
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Accumulation along a ray

Complex accumulate_ray(std::span<const Complex> delta, std::span<const Complex> s) {
  if (delta.size() != s.size()) throw DomainError("accumulate_ray: delta and s lengths differ");
  Complex sum{0.0, 0.0};
  Complex depth{0.0, 0.0};  // Σ_{m<n} δ_m
  for (std::size_t n = 0; n < s.size(); ++n) {
    const Complex transmittance = std::polar(std::exp(-depth.real()), -depth.imag());
    sum += transmittance * s[n];
    depth += delta[n];
  }
  return sum;
}

RayGradient accumulate_ray_backward(std::span<const Complex> delta, std::span<const Complex> s,
                                    Complex grad_out) {
  if (delta.size() != s.size()) throw DomainError("accumulate_ray_backward: delta and s lengths differ");
  const std::size_t n_samples = s.size();
  std::vector<Complex> contribution(n_samples);
  RayGradient g;
  g.s.resize(n_samples);
  g.delta.resize(n_samples);
  Complex depth{0.0, 0.0};
  for (std::size_t n = 0; n < n_samples; ++n) {
    const Complex transmittance = std::polar(std::exp(-depth.real()), -depth.imag());
    contribution[n] = transmittance * s[n];
    g.s[n] = grad_out * std::conj(transmittance);
    depth += delta[n];
  }
  // δ_m attenuates every voxel behind it: ∂R/∂δ_m = -Σ_{n>m} c_n.
  Complex behind{0.0, 0.0};
  for (std::size_t m = n_samples; m-- > 0;) {
    g.delta[m] = grad_out * std::conj(-behind);
    behind += contribution[m];
  }
  return g;
}

ad::Var accumulate_rays(const ad::Var& delta_re, const ad::Var& delta_im, const ad::Var& radiance) {
  const int rays = delta_re.batch();
  const int samples = delta_re.length();
  const Eigen::Index total = static_cast<Eigen::Index>(rays) * samples;
  if (delta_re.channels() != 1 || delta_im.channels() != 1 || delta_im.value().cols() != total ||
      radiance.value().cols() != total || radiance.channels() % 2 != 0) {
    throw DomainError("accumulate_rays: inconsistent delta / radiance layouts");
  }
  const int k_count = radiance.channels() / 2;

  ad::Matrix out(2 * k_count, rays);
  const ad::Matrix& dre = delta_re.value();
  const ad::Matrix& dim = delta_im.value();
  const ad::Matrix& rad = radiance.value();
  for (int r = 0; r < rays; ++r) {
    for (int k = 0; k < k_count; ++k) {
      Complex sum{0.0, 0.0};
      double depth_re = 0.0;
      double depth_im = 0.0;
      for (int n = 0; n < samples; ++n) {
        const Eigen::Index c = static_cast<Eigen::Index>(r) * samples + n;
        sum += std::polar(std::exp(rad(k, c) - depth_re), rad(k_count + k, c) - depth_im);
        depth_re += dre(0, c);
        depth_im += dim(0, c);
      }
      out(k, r) = sum.real();
      out(k_count + k, r) = sum.imag();
    }
  }

  return ad::make_op(std::move(out), rays, 1, {delta_re, delta_im, radiance},
                     [rays, samples, k_count](ad::Node& self) {
    ad::Node& n_dre = *self.inputs[0];
    ad::Node& n_dim = *self.inputs[1];
    ad::Node& n_rad = *self.inputs[2];
    const Eigen::Index total = static_cast<Eigen::Index>(rays) * samples;
    ad::Matrix g_dre = ad::Matrix::Zero(1, total);
    ad::Matrix g_dim = ad::Matrix::Zero(1, total);
    ad::Matrix g_rad = ad::Matrix::Zero(2 * k_count, total);
    std::vector<Complex> contribution(static_cast<std::size_t>(samples));
    std::vector<Complex> transmittance(static_cast<std::size_t>(samples));
    for (int r = 0; r < rays; ++r) {
      const Eigen::Index c0 = static_cast<Eigen::Index>(r) * samples;
      for (int k = 0; k < k_count; ++k) {
        const Complex g_out{self.grad(k, r), self.grad(k_count + k, r)};
        double depth_re = 0.0;
        double depth_im = 0.0;
        for (int n = 0; n < samples; ++n) {
          const Eigen::Index c = c0 + n;
          const auto i = static_cast<std::size_t>(n);
          transmittance[i] = std::polar(std::exp(-depth_re), -depth_im);
          contribution[i] = transmittance[i] * std::polar(std::exp(n_rad.value(k, c)), n_rad.value(k_count + k, c));
          // w = ĝ_S · conj(S) = ĝ_R · conj(c_n)
          const Complex w = g_out * std::conj(contribution[i]);
          g_rad(k, c) += w.real();
          g_rad(k_count + k, c) += w.imag();
          depth_re += n_dre.value(0, c);
          depth_im += n_dim.value(0, c);
        }
        Complex behind{0.0, 0.0};
        for (int n = samples - 1; n >= 0; --n) {
          const Complex gd = g_out * std::conj(-behind);
          g_dre(0, c0 + n) += gd.real();
          g_dim(0, c0 + n) += gd.imag();
          behind += contribution[static_cast<std::size_t>(n)];
        }
      }
    }
    if (n_dre.requires_grad) n_dre.accumulate(g_dre);
    if (n_dim.requires_grad) n_dim.accumulate(g_dim);
    if (n_rad.requires_grad) n_rad.accumulate(g_rad);
  });
}

ad::Var mean_over_directions(const ad::Var& rays, int group) {
  if (group < 1 || rays.value().cols() % group != 0) {
    throw ConfigError("mean_over_directions: ray count is not a multiple of the grid size");
  }
  const int links = static_cast<int>(rays.value().cols() / group);
  return ad::relayout(ad::adaptive_avg_pool(ad::relayout(rays, links, group), 1), links, 1);
}

// ---------------------------------------------------------------------------
// Rendering

RenderVars render_links(const RadianceFieldModel& model, std::span<const LinkQuery> links,
                        const DirectionGrid& grid, SamplingMode mode, Rng* rng) {
  if (grid.size() == 0) throw ConfigError("render: empty direction grid");
  if (links.empty()) throw ConfigError("render: no links to render");
  if (mode == SamplingMode::kStratified && rng == nullptr) {
    throw ConfigError("render: stratified sampling needs a random generator");
  }
  const SceneConfig& scene = model.scene();
  const bool swap = model.config().swap_tx_rx;
  const int n_samples = scene.samples_per_ray;
  const double d_max = scene.ray_length();
  const auto grid_size = static_cast<Eigen::Index>(grid.size());
  const Eigen::Index rays = grid_size * static_cast<Eigen::Index>(links.size());

  VoxelBlock voxels;
  voxels.rays = static_cast<int>(rays);
  voxels.samples = n_samples;
  voxels.positions.resize(3, rays * n_samples);
  Eigen::Matrix3Xd emitters(3, rays);
  Eigen::Matrix3Xd toward_origin(3, rays);
  Rng* stratify = mode == SamplingMode::kStratified ? rng : nullptr;
  for (std::size_t l = 0; l < links.size(); ++l) {
    const Position3& origin = swap ? links[l].tx : links[l].rx;
    const Position3& emitter = swap ? links[l].rx : links[l].tx;
    for (Eigen::Index g = 0; g < grid_size; ++g) {
      const Eigen::Index ray = static_cast<Eigen::Index>(l) * grid_size + g;
      const auto& dir = grid.directions[static_cast<std::size_t>(g)];
      RaySamples s = sample_ray(origin, dir, n_samples, d_max, stratify);
      voxels.positions.middleCols(ray * n_samples, n_samples) = s.positions;
      emitters.col(ray) = emitter;
      toward_origin.col(ray) = -dir;
    }
  }

  AttenuationVars att = model.attenuation().forward(voxels);
  ad::Var radiance = model.radiance().forward(emitters, toward_origin, att.feature);
  RenderVars out;
  out.per_direction = accumulate_rays(att.delta_re, att.delta_im, radiance);
  if (!out.per_direction.value().allFinite()) {
    for (Eigen::Index c = 0; c < out.per_direction.value().cols(); ++c) {
      if (!out.per_direction.value().col(c).allFinite()) {
        throw NumericalError("render: non-finite ray result at direction " + std::to_string(c % grid_size));
      }
    }
  }
  out.channel = mean_over_directions(out.per_direction, static_cast<int>(grid_size));
  return out;
}

std::vector<Complex> unpack_complex_column(const ad::Matrix& m, Eigen::Index col) {
  const Eigen::Index k = m.rows() / 2;
  std::vector<Complex> out(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) out[static_cast<std::size_t>(i)] = {m(i, col), m(k + i, col)};
  return out;
}

Eigen::MatrixXd spectrum_from_directions(const Eigen::MatrixXcd& per_direction, const DirectionGrid& grid) {
  if (per_direction.cols() != static_cast<Eigen::Index>(grid.size())) {
    throw ConfigError("spectrum: direction count does not match grid");
  }
  Eigen::MatrixXd spectrum(grid.elevation_bins, grid.azimuth_bins);
  for (int e = 0; e < grid.elevation_bins; ++e) {
    for (int a = 0; a < grid.azimuth_bins; ++a) {
      spectrum(e, a) = per_direction.col(static_cast<Eigen::Index>(e) * grid.azimuth_bins + a).cwiseAbs2().mean();
    }
  }
  const double peak = spectrum.maxCoeff();
  if (peak > 0.0) spectrum /= peak;
  return spectrum;
}

RenderResult render(const Position3& rx, const Position3& tx, const DirectionGrid& grid,
                    const RadianceFieldModel& model) {
  const LinkQuery link{rx, tx};
  RenderVars vars = render_links(model, std::span<const LinkQuery>(&link, 1), grid);
  RenderResult result;
  const ad::Matrix& pd = vars.per_direction.value();
  const Eigen::Index k = pd.rows() / 2;
  result.per_direction.resize(k, pd.cols());
  for (Eigen::Index c = 0; c < pd.cols(); ++c) {
    for (Eigen::Index i = 0; i < k; ++i) result.per_direction(i, c) = {pd(i, c), pd(k + i, c)};
  }
  result.channel.h = unpack_complex_column(vars.channel.value(), 0);
  const Complex mean = mean_response(result.channel);
  result.rssi = std::norm(mean) > 0.0 ? rssi_db(mean) : -std::numeric_limits<double>::infinity();
  result.spectrum = spectrum_from_directions(result.per_direction, grid);
  return result;
}

}  // namespace nerfapt
