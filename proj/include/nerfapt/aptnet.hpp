// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "nerfapt/autodiff.hpp"
#include "nerfapt/random.hpp"

namespace nerfapt {

/// A feature map is an autodiff value laid out as channels × (batch · length),
/// where the sequence axis runs over the samples of one ray.
using FeatureMap = ad::Var;

/// Builds a constant feature map from a (batch, channels, length) row-major buffer.
FeatureMap make_feature_map(const std::vector<double>& values, int batch, int channels, int length);
double feature_at(const FeatureMap& x, int b, int c, int l);

/// Named, ordered trainable arrays. Names are stable across runs and are the
/// keys used in checkpoints.
class ParamSet {
 public:
  ad::Var& add(const std::string& name, ad::Matrix init);
  ad::Var& get(const std::string& name);
  const ad::Var& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<std::pair<std::string, ad::Var>>& entries() { return entries_; }
  const std::vector<std::pair<std::string, ad::Var>>& entries() const { return entries_; }
  std::size_t scalar_count() const;
  void zero_grad();
  /// Sum of squared gradients over entries whose name starts with `prefix`.
  double grad_norm_squared(const std::string& prefix = "") const;

 private:
  std::vector<std::pair<std::string, ad::Var>> entries_;
};

/// Convolution over the sequence axis with "same" zero padding. A kernel of 1
/// is a per-sample linear map.
struct ConvLayer {
  ad::Var weight;  // out × (in · kernel), column = in_channel · kernel + tap
  ad::Var bias;    // out × 1, may be empty
  int kernel = 1;

  ad::Var operator()(const ad::Var& x) const { return ad::conv1d(x, weight, bias, kernel); }
};

enum class InitScheme { kRelu, kLinear };

ConvLayer make_conv(ParamSet& params, const std::string& name, int in_channels, int out_channels,
                    int kernel, Rng& rng, InitScheme scheme = InitScheme::kRelu, bool with_bias = true);

/// Gate on a skip connection: Q = W_Q·q_src, K = W_K·kv_src, V' = W_V·kv_src,
/// out = softmax_seq(Φ((Q + K)/√d_k)) ⊙ V', with Φ a 1×1 convolution to one
/// channel whose map gates every channel of V'.
struct AttentionGateParams {
  ConvLayer w_q;
  ConvLayer w_k;
  ConvLayer w_v;
  ConvLayer phi;
  int d_k = 1;
};

AttentionGateParams make_attention_gate(ParamSet& params, const std::string& name, int q_channels,
                                        int kv_channels, int d_k, Rng& rng);

/// Throws ConfigError when the two sources differ in batch or sequence length.
/// `weights`, when given, receives the softmax map (1 × batch·length).
FeatureMap attention_gate(const FeatureMap& q_src, const FeatureMap& kv_src,
                          const AttentionGateParams& gate, ad::Matrix* weights = nullptr);

struct SppParams {
  std::vector<int> levels;
  std::vector<ConvLayer> branches;  // one 1×1 channel-restoring conv per level
  ConvLayer fuse;                   // (1 + levels) · C → C
};

SppParams make_spp(ParamSet& params, const std::string& name, int channels,
                   const std::vector<int>& levels, Rng& rng);

/// Pyramid pooling bottleneck. Throws ConfigError if the sequence is shorter
/// than the largest level. `branch_outputs`, when given, receives each
/// level's resampled branch before concatenation.
FeatureMap spp_bottleneck(const FeatureMap& x, const SppParams& spp,
                          std::vector<ad::Matrix>* branch_outputs = nullptr);

struct AptConfig {
  int depth = 2;
  int base_channels = 16;
  std::vector<int> spp_levels{4, 2, 1};
  bool use_attention_gates = true;
  bool use_spp = true;
  int in_dim = 1;
  int out_dim = 1;

  void validate() const;
};

/// Optional diagnostics collected during a forward pass.
struct AptTrace {
  std::vector<ad::Matrix> attention_weights;  // one per gate, decoder order
  std::vector<int> gate_lengths;
};

enum class BackboneKind { kApt, kMlp };

/// Common interface of the sequence backbones used by the field networks.
class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual FeatureMap forward(const FeatureMap& x, AptTrace* trace = nullptr) const = 0;
  virtual int in_dim() const = 0;
  virtual int out_dim() const = 0;
};

/// U-Net over the per-ray sample axis with attention-gated skips and an SPP
/// bottleneck. With both gates and SPP disabled it is a plain 1-D U-Net.
class AptNet final : public Backbone {
 public:
  AptNet(const AptConfig& cfg, ParamSet& params, const std::string& prefix, Rng& rng);

  FeatureMap forward(const FeatureMap& x, AptTrace* trace = nullptr) const override;
  int in_dim() const override { return cfg_.in_dim; }
  int out_dim() const override { return cfg_.out_dim; }
  const AptConfig& config() const { return cfg_; }

  struct DoubleConv {
    ConvLayer first;
    ConvLayer second;
  };
  struct DecoderLevel {
    ConvLayer up;
    AttentionGateParams gate;
    DoubleConv convs;
  };

  const std::vector<DoubleConv>& encoder() const { return encoder_; }
  const DoubleConv& bottleneck() const { return bottleneck_; }
  const SppParams& spp() const { return spp_; }
  const std::vector<DecoderLevel>& decoder() const { return decoder_; }  // deepest first
  const ConvLayer& head() const { return head_; }

 private:
  AptConfig cfg_;
  std::vector<DoubleConv> encoder_;
  DoubleConv bottleneck_;
  SppParams spp_;
  std::vector<DecoderLevel> decoder_;
  ConvLayer head_;
};

/// Per-sample fully connected baseline: ReLU hidden layers, linear head.
class Mlp final : public Backbone {
 public:
  Mlp(int in_dim, const std::vector<int>& hidden_dims, int out_dim, ParamSet& params,
      const std::string& prefix, Rng& rng);

  FeatureMap forward(const FeatureMap& x, AptTrace* trace = nullptr) const override;
  int in_dim() const override { return in_dim_; }
  int out_dim() const override { return out_dim_; }
  const std::vector<ConvLayer>& layers() const { return layers_; }

 private:
  int in_dim_;
  int out_dim_;
  std::vector<ConvLayer> layers_;
};

/// Functional form of the MLP: rows of `x` are samples. `weights[i]` is
/// (out_i × in_i), `biases[i]` has out_i entries; hidden layers use ReLU.
Eigen::MatrixXd mlp_forward(const Eigen::MatrixXd& x, const std::vector<Eigen::MatrixXd>& weights,
                            const std::vector<Eigen::VectorXd>& biases);

struct BackboneConfig {
  BackboneKind kind = BackboneKind::kApt;
  AptConfig apt;                        // in_dim/out_dim are overwritten by the caller
  std::vector<int> mlp_hidden{64, 64, 64, 64};
};

std::unique_ptr<Backbone> make_backbone(const BackboneConfig& cfg, int in_dim, int out_dim,
                                        ParamSet& params, const std::string& prefix, Rng& rng);

}  // namespace nerfapt
