// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "nerfapt/fields.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <mutex>

#include "nerfapt/errors.hpp"

namespace nerfapt {

Position3 SceneConfig::normalize(const Position3& p, bool* clamped) const {
  Position3 out;
  bool outside = false;
  for (int i = 0; i < 3; ++i) {
    double v = 2.0 * (p[i] - bounds_min[i]) / (bounds_max[i] - bounds_min[i]) - 1.0;
    if (v < -1.0 || v > 1.0) {
      outside = true;
      v = std::clamp(v, -1.0, 1.0);
    }
    out[i] = v;
  }
  if (clamped) *clamped = outside;
  return out;
}

void SceneConfig::validate() const {
  for (int i = 0; i < 3; ++i) {
    if (!(bounds_max[i] > bounds_min[i])) throw ConfigError("scene: bounds_max must exceed bounds_min");
  }
  if (azimuth_bins < 1 || elevation_bins < 1) throw ConfigError("scene: direction grid must be non-empty");
  if (samples_per_ray < 1) throw ConfigError("scene: samples_per_ray must be >= 1");
  if (max_distance < 0.0) throw ConfigError("scene: max_distance must be >= 0");
  if (!(carrier_hz > 0.0)) throw ConfigError("scene: carrier_hz must be positive");
  if (num_subcarriers < 1) throw ConfigError("scene: num_subcarriers must be >= 1");
  if (!(subcarrier_spacing_hz > 0.0)) throw ConfigError("scene: subcarrier_spacing_hz must be positive");
}

void FieldConfig::validate() const {
  if (feature_dim < 0) throw ConfigError("fields: feature_dim must be >= 0");
  if (num_subcarriers < 1) throw ConfigError("fields: num_subcarriers must be >= 1");
  if (position_encoding.num_frequencies < 0 || direction_encoding.num_frequencies < 0) {
    throw ConfigError("fields: encoder frequency counts must be >= 0");
  }
  if (backbone.kind == BackboneKind::kApt) {
    AptConfig probe = backbone.apt;
    probe.in_dim = 1;
    probe.out_dim = 1;
    probe.validate();
  }
}

namespace {

void warn_clamped(int count) {
  static std::once_flag once;
  std::call_once(once, [count] {
    std::cerr << "warning: " << count
              << " voxel positions fell outside the scene bounds and were clamped\n";
  });
}

}  // namespace

// ---------------------------------------------------------------------------

AttenuationNetwork::AttenuationNetwork(const FieldConfig& cfg, const SceneConfig& scene, ParamSet& params,
                                       Rng& rng)
    : cfg_(cfg), scene_(scene) {
  const int in = cfg_.position_encoding.output_dim(3);
  backbone_ = make_backbone(cfg_.backbone, in, 2 + cfg_.feature_dim, params, "attenuation", rng);
}

AttenuationVars AttenuationNetwork::forward(const VoxelBlock& voxels, int* clamped) const {
  if (voxels.positions.cols() != static_cast<Eigen::Index>(voxels.rays) * voxels.samples) {
    throw ConfigError("attenuation: voxel block layout does not match position count");
  }
  Eigen::Matrix3Xd normalized(3, voxels.positions.cols());
  int outside = 0;
  for (Eigen::Index i = 0; i < voxels.positions.cols(); ++i) {
    bool c = false;
    normalized.col(i) = scene_.normalize(voxels.positions.col(i), &c);
    outside += c ? 1 : 0;
  }
  if (outside > 0) warn_clamped(outside);
  if (clamped) *clamped = outside;

  ad::Var input = ad::Var::constant(positional_encode_columns(normalized, cfg_.position_encoding),
                                    voxels.rays, voxels.samples);
  ad::Var head = backbone_->forward(input);
  AttenuationVars out;
  out.delta_re = ad::softplus(ad::slice_channels(head, 0, 1));
  out.delta_im = ad::scale(ad::slice_channels(head, 1, 1), -1.0);
  out.feature = ad::slice_channels(head, 2, cfg_.feature_dim);
  return out;
}

AttenuationOutput AttenuationNetwork::evaluate(const VoxelBlock& voxels) const {
  AttenuationOutput out;
  AttenuationVars vars = forward(voxels, &out.clamped);
  const Eigen::Index n = vars.delta_re.value().cols();
  out.delta.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    out.delta[static_cast<std::size_t>(i)] = {vars.delta_re.value()(0, i), vars.delta_im.value()(0, i)};
    if (!std::isfinite(out.delta[static_cast<std::size_t>(i)].real()) ||
        !std::isfinite(out.delta[static_cast<std::size_t>(i)].imag())) {
      throw NumericalError("attenuation: non-finite output at voxel " + std::to_string(i));
    }
  }
  out.feature = vars.feature.value();
  return out;
}

// ---------------------------------------------------------------------------

RadianceNetwork::RadianceNetwork(const FieldConfig& cfg, const SceneConfig& scene, ParamSet& params, Rng& rng)
    : cfg_(cfg), scene_(scene) {
  const int in = cfg_.position_encoding.output_dim(3) + cfg_.direction_encoding.output_dim(3) + cfg_.feature_dim;
  backbone_ = make_backbone(cfg_.backbone, in, 2 * cfg_.num_subcarriers, params, "radiance", rng);
}

ad::Var RadianceNetwork::forward(const Eigen::Matrix3Xd& tx, const Eigen::Matrix3Xd& directions,
                                 const ad::Var& feature) const {
  const Eigen::Index rays = tx.cols();
  if (directions.cols() != rays || rays == 0 || feature.value().cols() % rays != 0) {
    throw ConfigError("radiance: transmitter, direction and feature counts disagree");
  }
  if (feature.channels() != cfg_.feature_dim) {
    throw ConfigError("radiance: feature dimension " + std::to_string(feature.channels()) +
                      " does not match configured " + std::to_string(cfg_.feature_dim));
  }
  const Eigen::Index samples = feature.value().cols() / rays;
  Eigen::Matrix3Xd tx_norm(3, rays);
  for (Eigen::Index r = 0; r < rays; ++r) tx_norm.col(r) = scene_.normalize(tx.col(r));
  const Eigen::MatrixXd tx_enc = positional_encode_columns(tx_norm, cfg_.position_encoding);
  const Eigen::MatrixXd dir_enc = positional_encode_columns(directions, cfg_.direction_encoding);

  ad::Matrix cond(tx_enc.rows() + dir_enc.rows(), rays * samples);
  for (Eigen::Index r = 0; r < rays; ++r) {
    for (Eigen::Index n = 0; n < samples; ++n) {
      cond.col(r * samples + n) << tx_enc.col(r), dir_enc.col(r);
    }
  }
  const int batch = static_cast<int>(rays);
  const int length = static_cast<int>(samples);
  ad::Var input = ad::concat_channels(
      {ad::Var::constant(std::move(cond), batch, length), ad::relayout(feature, batch, length)});
  return backbone_->forward(input);
}

RadianceOutput RadianceNetwork::evaluate(const Position3& tx, const Eigen::Vector3d& direction,
                                         const Eigen::MatrixXd& feature) const {
  if (std::abs(direction.norm() - 1.0) > 1e-6) throw DomainError("radiance: direction must be a unit vector");
  Eigen::Matrix3Xd txm = tx;
  Eigen::Matrix3Xd dir = direction;
  ad::Var out = forward(txm, dir, ad::Var::constant(feature, 1, static_cast<int>(feature.cols())));
  const int k = cfg_.num_subcarriers;
  RadianceOutput result;
  result.s.resize(k, out.value().cols());
  for (Eigen::Index i = 0; i < out.value().cols(); ++i) {
    for (int j = 0; j < k; ++j) {
      result.s(j, i) = std::polar(std::exp(out.value()(j, i)), out.value()(k + j, i));
      if (!std::isfinite(result.s(j, i).real()) || !std::isfinite(result.s(j, i).imag())) {
        throw NumericalError("radiance: non-finite output at voxel " + std::to_string(i));
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

RadianceFieldModel::RadianceFieldModel(const FieldConfig& cfg, const SceneConfig& scene, std::uint64_t seed)
    : cfg_(cfg), scene_(scene), seed_(seed) {
  cfg_.validate();
  scene_.validate();
  Rng rng(seed);
  attenuation_ = std::make_unique<AttenuationNetwork>(cfg_, scene_, params_, rng);
  radiance_ = std::make_unique<RadianceNetwork>(cfg_, scene_, params_, rng);
}

}  // namespace nerfapt
