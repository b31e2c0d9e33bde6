// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "nerfapt/aptnet.hpp"
#include "nerfapt/core.hpp"
#include "nerfapt/encoding.hpp"
#include "nerfapt/scene.hpp"

namespace nerfapt {

struct FieldConfig {
  BackboneConfig backbone;
  EncoderConfig position_encoding{10, true};
  EncoderConfig direction_encoding{4, true};
  int feature_dim = 64;
  int num_subcarriers = 1;  // radiance head width is 2 · num_subcarriers
  bool swap_tx_rx = false;  // cast rays from the transmitter instead of the receiver

  void validate() const;
};

/// Voxel positions for `rays` rays of `samples` points each, ray-major.
struct VoxelBlock {
  Eigen::Matrix3Xd positions;
  int rays = 0;
  int samples = 0;
};

/// Differentiable attenuation outputs, each laid out (channels × rays·N).
struct AttenuationVars {
  ad::Var delta_re;  // softplus(head), ≥ 0
  ad::Var delta_im;  // -Δθ
  ad::Var feature;   // F channels
};

struct AttenuationOutput {
  std::vector<Complex> delta;  // δ = -ln ΔA - jΔθ per voxel
  Eigen::MatrixXd feature;     // F × voxels
  int clamped = 0;             // voxels outside the scene bounds
};

struct RadianceOutput {
  Eigen::MatrixXcd s;  // K × voxels
};

/// Maps voxel positions to (δ, f). Takes no transmitter or direction input:
/// attenuation depends on the scene only.
class AttenuationNetwork {
 public:
  AttenuationNetwork(const FieldConfig& cfg, const SceneConfig& scene, ParamSet& params, Rng& rng);

  AttenuationVars forward(const VoxelBlock& voxels, int* clamped = nullptr) const;
  AttenuationOutput evaluate(const VoxelBlock& voxels) const;
  int input_dim() const { return backbone_->in_dim(); }

 private:
  FieldConfig cfg_;
  SceneConfig scene_;
  std::unique_ptr<Backbone> backbone_;
};

/// Maps (transmitter, direction, feature) per voxel to the re-transmitted
/// signal S = exp(log-amplitude)·exp(j·phase), one value per subcarrier.
class RadianceNetwork {
 public:
  RadianceNetwork(const FieldConfig& cfg, const SceneConfig& scene, ParamSet& params, Rng& rng);

  /// `tx` and `directions` hold one column per ray; `feature` is F × (rays·N).
  /// Returns 2K × (rays·N): K log-amplitudes then K phases.
  ad::Var forward(const Eigen::Matrix3Xd& tx, const Eigen::Matrix3Xd& directions,
                  const ad::Var& feature) const;
  /// Single ray. Throws DomainError unless |direction| = 1 ± 1e-6.
  RadianceOutput evaluate(const Position3& tx, const Eigen::Vector3d& direction,
                          const Eigen::MatrixXd& feature) const;

 private:
  FieldConfig cfg_;
  SceneConfig scene_;
  std::unique_ptr<Backbone> backbone_;
};

/// Both field networks and their shared parameter set.
class RadianceFieldModel {
 public:
  RadianceFieldModel(const FieldConfig& cfg, const SceneConfig& scene, std::uint64_t seed);
  RadianceFieldModel(const RadianceFieldModel&) = delete;
  RadianceFieldModel& operator=(const RadianceFieldModel&) = delete;

  const FieldConfig& config() const { return cfg_; }
  const SceneConfig& scene() const { return scene_; }
  std::uint64_t seed() const { return seed_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  const AttenuationNetwork& attenuation() const { return *attenuation_; }
  const RadianceNetwork& radiance() const { return *radiance_; }

 private:
  FieldConfig cfg_;
  SceneConfig scene_;
  std::uint64_t seed_;
  ParamSet params_;
  std::unique_ptr<AttenuationNetwork> attenuation_;
  std::unique_ptr<RadianceNetwork> radiance_;
};

}  // namespace nerfapt
