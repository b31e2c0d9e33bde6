// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "nerfapt/aptnet.hpp"

#include <algorithm>
#include <cmath>

#include "nerfapt/errors.hpp"

namespace nerfapt {

FeatureMap make_feature_map(const std::vector<double>& values, int batch, int channels, int length) {
  if (values.size() != static_cast<std::size_t>(batch) * channels * length) {
    throw ConfigError("make_feature_map: buffer size does not match shape");
  }
  ad::Matrix m(channels, static_cast<Eigen::Index>(batch) * length);
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < channels; ++c) {
      for (int l = 0; l < length; ++l) {
        m(c, static_cast<Eigen::Index>(b) * length + l) =
            values[(static_cast<std::size_t>(b) * channels + c) * length + l];
      }
    }
  }
  return ad::Var::constant(std::move(m), batch, length);
}

double feature_at(const FeatureMap& x, int b, int c, int l) {
  return x.value()(c, static_cast<Eigen::Index>(b) * x.length() + l);
}

// ---------------------------------------------------------------------------
// ParamSet

ad::Var& ParamSet::add(const std::string& name, ad::Matrix init) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  entries_.emplace_back(name, ad::Var::parameter(std::move(init)));
  return entries_.back().second;
}

ad::Var& ParamSet::get(const std::string& name) {
  for (auto& [n, v] : entries_) {
    if (n == name) return v;
  }
  throw ConfigError("unknown parameter: " + name);
}

const ad::Var& ParamSet::get(const std::string& name) const {
  for (const auto& [n, v] : entries_) {
    if (n == name) return v;
  }
  throw ConfigError("unknown parameter: " + name);
}

bool ParamSet::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.second.value().size());
  return n;
}

void ParamSet::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

double ParamSet::grad_norm_squared(const std::string& prefix) const {
  double sum = 0.0;
  for (const auto& [name, v] : entries_) {
    if (name.rfind(prefix, 0) == 0 && v.grad().size() != 0) sum += v.grad().squaredNorm();
  }
  return sum;
}

ConvLayer make_conv(ParamSet& params, const std::string& name, int in_channels, int out_channels,
                    int kernel, Rng& rng, InitScheme scheme, bool with_bias) {
  if (in_channels < 1 || out_channels < 1) throw ConfigError("conv " + name + ": empty channel count");
  const int fan_in = in_channels * kernel;
  const double bound =
      scheme == InitScheme::kRelu ? std::sqrt(6.0 / fan_in) : std::sqrt(3.0 / fan_in);
  ad::Matrix w(out_channels, fan_in);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
  ConvLayer layer;
  layer.kernel = kernel;
  layer.weight = params.add(name + ".weight", std::move(w));
  if (with_bias) layer.bias = params.add(name + ".bias", ad::Matrix::Zero(out_channels, 1));
  return layer;
}

// ---------------------------------------------------------------------------
// Attention gate

AttentionGateParams make_attention_gate(ParamSet& params, const std::string& name, int q_channels,
                                        int kv_channels, int d_k, Rng& rng) {
  if (d_k < 1) throw ConfigError("attention gate " + name + ": d_k must be positive");
  AttentionGateParams g;
  g.d_k = d_k;
  g.w_q = make_conv(params, name + ".w_q", q_channels, d_k, 1, rng, InitScheme::kLinear, false);
  g.w_k = make_conv(params, name + ".w_k", kv_channels, d_k, 1, rng, InitScheme::kLinear, false);
  g.w_v = make_conv(params, name + ".w_v", kv_channels, kv_channels, 1, rng, InitScheme::kLinear, false);
  g.phi = make_conv(params, name + ".phi", d_k, 1, 1, rng, InitScheme::kLinear, true);
  return g;
}

FeatureMap attention_gate(const FeatureMap& q_src, const FeatureMap& kv_src,
                          const AttentionGateParams& gate, ad::Matrix* weights) {
  if (q_src.batch() != kv_src.batch() || q_src.length() != kv_src.length()) {
    throw ConfigError("attention_gate: query and key/value sequences differ in shape (" +
                      std::to_string(q_src.length()) + " vs " + std::to_string(kv_src.length()) + ")");
  }
  if (gate.d_k < 1) throw ConfigError("attention_gate: d_k must be positive");
  const ad::Var q = gate.w_q(q_src);
  const ad::Var k = gate.w_k(kv_src);
  const ad::Var v = gate.w_v(kv_src);
  const ad::Var merged = ad::scale(ad::add(q, k), 1.0 / std::sqrt(static_cast<double>(gate.d_k)));
  const ad::Var attn = ad::softmax_sequence(gate.phi(merged));
  if (weights) *weights = attn.value();
  return ad::gate_multiply(attn, v);
}

// ---------------------------------------------------------------------------
// Spatial pyramid pooling

SppParams make_spp(ParamSet& params, const std::string& name, int channels,
                   const std::vector<int>& levels, Rng& rng) {
  SppParams spp;
  spp.levels = levels;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    spp.branches.push_back(make_conv(params, name + ".branch" + std::to_string(i), channels, channels, 1,
                                     rng, InitScheme::kLinear));
  }
  spp.fuse = make_conv(params, name + ".fuse", channels * static_cast<int>(levels.size() + 1), channels,
                       1, rng, InitScheme::kLinear);
  return spp;
}

namespace {

FeatureMap apply_spp(const FeatureMap& x, const SppParams& spp, const std::vector<int>& levels,
                     std::vector<ad::Matrix>* branch_outputs) {
  std::vector<ad::Var> parts{x};
  for (std::size_t i = 0; i < levels.size(); ++i) {
    ad::Var pooled = ad::adaptive_avg_pool(x, levels[i]);
    ad::Var restored = ad::resize_nearest(spp.branches[i](pooled), x.length());
    if (branch_outputs) branch_outputs->push_back(restored.value());
    parts.push_back(restored);
  }
  return spp.fuse(ad::concat_channels(parts));
}

}  // namespace

FeatureMap spp_bottleneck(const FeatureMap& x, const SppParams& spp,
                          std::vector<ad::Matrix>* branch_outputs) {
  if (spp.levels.empty() || spp.branches.size() != spp.levels.size()) {
    throw ConfigError("spp_bottleneck: level list does not match branch parameters");
  }
  const int largest = *std::max_element(spp.levels.begin(), spp.levels.end());
  if (x.length() < largest) {
    throw ConfigError("spp_bottleneck: sequence length " + std::to_string(x.length()) +
                      " is shorter than pyramid level " + std::to_string(largest));
  }
  return apply_spp(x, spp, spp.levels, branch_outputs);
}

// ---------------------------------------------------------------------------
// APT backbone

void AptConfig::validate() const {
  if (depth < 1 || depth > 3) throw ConfigError("apt: depth must be 1, 2 or 3");
  if (base_channels < 8) throw ConfigError("apt: base_channels must be >= 8");
  if (in_dim < 1 || out_dim < 1) throw ConfigError("apt: in_dim and out_dim must be positive");
  if (use_spp) {
    if (spp_levels.empty()) throw ConfigError("apt: spp_levels must not be empty");
    for (std::size_t i = 0; i < spp_levels.size(); ++i) {
      if (spp_levels[i] < 1) throw ConfigError("apt: spp levels must be >= 1");
      if (i > 0 && spp_levels[i] >= spp_levels[i - 1]) {
        throw ConfigError("apt: spp levels must be strictly decreasing");
      }
    }
  }
}

AptNet::AptNet(const AptConfig& cfg, ParamSet& params, const std::string& prefix, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  auto channels = [&](int level) { return cfg_.base_channels << level; };

  int in = cfg_.in_dim;
  for (int i = 0; i < cfg_.depth; ++i) {
    const std::string name = prefix + ".enc" + std::to_string(i);
    DoubleConv dc{make_conv(params, name + ".conv_a", in, channels(i), 3, rng),
                  make_conv(params, name + ".conv_b", channels(i), channels(i), 3, rng)};
    encoder_.push_back(std::move(dc));
    in = channels(i);
  }
  const int bottom = channels(cfg_.depth);
  bottleneck_ = {make_conv(params, prefix + ".mid.conv_a", in, bottom, 3, rng),
                 make_conv(params, prefix + ".mid.conv_b", bottom, bottom, 3, rng)};
  if (cfg_.use_spp) spp_ = make_spp(params, prefix + ".spp", bottom, cfg_.spp_levels, rng);

  int below = bottom;
  for (int i = cfg_.depth - 1; i >= 0; --i) {
    const std::string name = prefix + ".dec" + std::to_string(i);
    const int c = channels(i);
    DecoderLevel level;
    level.up = make_conv(params, name + ".up", below, c, 3, rng);
    if (cfg_.use_attention_gates) {
      level.gate = make_attention_gate(params, name + ".gate", c, c, std::max(1, c / 2), rng);
    }
    level.convs = {make_conv(params, name + ".conv_a", 2 * c, c, 3, rng),
                   make_conv(params, name + ".conv_b", c, c, 3, rng)};
    decoder_.push_back(std::move(level));
    below = c;
  }
  head_ = make_conv(params, prefix + ".head", channels(0), cfg_.out_dim, 1, rng, InitScheme::kLinear);
}

FeatureMap AptNet::forward(const FeatureMap& x, AptTrace* trace) const {
  if (x.channels() != cfg_.in_dim) {
    throw ConfigError("apt: expected " + std::to_string(cfg_.in_dim) + " input channels, got " +
                      std::to_string(x.channels()));
  }
  int layer = 0;
  auto conv_relu = [&layer](const ConvLayer& conv, const ad::Var& in) {
    ad::Var out = ad::relu(conv(in));
    ad::check_finite(out, "layer " + std::to_string(layer++));
    return out;
  };

  std::vector<ad::Var> skips;
  ad::Var h = x;
  for (const auto& level : encoder_) {
    h = conv_relu(level.second, conv_relu(level.first, h));
    skips.push_back(h);
    h = ad::max_pool2(h);
  }
  h = conv_relu(bottleneck_.second, conv_relu(bottleneck_.first, h));
  if (cfg_.use_spp) {
    // Odd or short ray lengths can leave fewer bottleneck samples than the
    // coarsest pyramid size; those levels pool to the available length.
    std::vector<int> levels;
    for (int s : spp_.levels) levels.push_back(std::min(s, h.length()));
    h = apply_spp(h, spp_, levels, nullptr);
    ad::check_finite(h, "layer " + std::to_string(layer++) + " (spp)");
  }

  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    const DecoderLevel& level = decoder_[i];
    const ad::Var& skip = skips[skips.size() - 1 - i];
    ad::Var up = conv_relu(level.up, ad::upsample2(h));
    up = ad::adaptive_resample(up, skip.length());
    ad::Var bridged = skip;
    if (cfg_.use_attention_gates) {
      ad::Matrix weights;
      bridged = attention_gate(up, skip, level.gate, trace ? &weights : nullptr);
      if (trace) {
        trace->attention_weights.push_back(std::move(weights));
        trace->gate_lengths.push_back(skip.length());
      }
    }
    h = ad::concat_channels({bridged, up});
    h = conv_relu(level.convs.second, conv_relu(level.convs.first, h));
  }
  ad::Var out = head_(h);
  ad::check_finite(out, "layer " + std::to_string(layer) + " (head)");
  return out;
}

// ---------------------------------------------------------------------------
// MLP baseline

Mlp::Mlp(int in_dim, const std::vector<int>& hidden_dims, int out_dim, ParamSet& params,
         const std::string& prefix, Rng& rng)
    : in_dim_(in_dim), out_dim_(out_dim) {
  int in = in_dim;
  for (std::size_t i = 0; i < hidden_dims.size(); ++i) {
    layers_.push_back(make_conv(params, prefix + ".fc" + std::to_string(i), in, hidden_dims[i], 1, rng));
    in = hidden_dims[i];
  }
  layers_.push_back(make_conv(params, prefix + ".head", in, out_dim, 1, rng, InitScheme::kLinear));
}

FeatureMap Mlp::forward(const FeatureMap& x, AptTrace*) const {
  if (x.channels() != in_dim_) {
    throw ConfigError("mlp: expected " + std::to_string(in_dim_) + " input channels, got " +
                      std::to_string(x.channels()));
  }
  ad::Var h = x;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    h = ad::relu(layers_[i](h));
    ad::check_finite(h, "layer " + std::to_string(i));
  }
  ad::Var out = layers_.back()(h);
  ad::check_finite(out, "layer " + std::to_string(layers_.size() - 1) + " (head)");
  return out;
}

Eigen::MatrixXd mlp_forward(const Eigen::MatrixXd& x, const std::vector<Eigen::MatrixXd>& weights,
                            const std::vector<Eigen::VectorXd>& biases) {
  if (weights.empty() || weights.size() != biases.size()) {
    throw ConfigError("mlp_forward: weights and biases must pair up");
  }
  if (!x.allFinite()) throw DomainError("mlp_forward: non-finite input");
  Eigen::MatrixXd h = x.transpose();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i].cols() != h.rows() || biases[i].size() != weights[i].rows()) {
      throw ConfigError("mlp_forward: dimension mismatch at layer " + std::to_string(i));
    }
    h = (weights[i] * h).colwise() + biases[i];
    if (i + 1 < weights.size()) h = h.cwiseMax(0.0);
  }
  return h.transpose();
}

std::unique_ptr<Backbone> make_backbone(const BackboneConfig& cfg, int in_dim, int out_dim,
                                        ParamSet& params, const std::string& prefix, Rng& rng) {
  if (cfg.kind == BackboneKind::kApt) {
    AptConfig apt = cfg.apt;
    apt.in_dim = in_dim;
    apt.out_dim = out_dim;
    return std::make_unique<AptNet>(apt, params, prefix, rng);
  }
  for (int h : cfg.mlp_hidden) {
    if (h < 1) throw ConfigError("mlp: hidden widths must be positive");
  }
  return std::make_unique<Mlp>(in_dim, cfg.mlp_hidden, out_dim, params, prefix, rng);
}

}  // namespace nerfapt
