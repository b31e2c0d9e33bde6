// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "nerfapt/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "nerfapt/errors.hpp"
#include "nerfapt/random.hpp"
#include "nerfapt/raytrace.hpp"

namespace nerfapt {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const {
  if (backbone == BackboneKind::kApt && (depth < 1 || depth > 3)) {
    throw ConfigError("train: depth must be 1, 2 or 3 for the apt backbone");
  }
  if (depth < 1) throw ConfigError("train: depth must be >= 1");
  if (base_channels < 1) throw ConfigError("train: base_channels must be >= 1");
  for (int level : spp_levels) {
    if (level < 1) throw ConfigError("train: spp_levels entries must be >= 1");
  }
  for (int width : mlp_hidden) {
    if (width < 1) throw ConfigError("train: mlp_hidden entries must be >= 1");
  }
  if (feature_dim < 0) throw ConfigError("train: feature_dim must be >= 0");
  if (position_frequencies < 0 || direction_frequencies < 0) {
    throw ConfigError("train: encoder frequency counts must be >= 0");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train: learning_rate must be > 0");
  if (!(final_lr_fraction >= 0.0 && final_lr_fraction <= 1.0)) {
    throw ConfigError("train: final_lr_fraction must lie in [0, 1]");
  }
  if (batch_rays < 1) throw ConfigError("train: batch_rays must be >= 1");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (eval_every < 1) throw ConfigError("train: eval_every must be >= 1");
  if (patience < 1) throw ConfigError("train: patience must be >= 1");
}

namespace {

std::string backbone_name(BackboneKind kind) { return kind == BackboneKind::kApt ? "apt" : "mlp"; }

BackboneKind backbone_from(const std::string& name) {
  if (name == "apt") return BackboneKind::kApt;
  if (name == "mlp") return BackboneKind::kMlp;
  throw ConfigError("unknown backbone '" + name + "' (expected apt or mlp)");
}

}  // namespace

json train_config_to_json(const TrainConfig& c) {
  return json{{"task", to_string(c.task)},
              {"backbone", backbone_name(c.backbone)},
              {"depth", c.depth},
              {"base_channels", c.base_channels},
              {"spp_levels", c.spp_levels},
              {"use_attention_gates", c.use_attention_gates},
              {"use_spp", c.use_spp},
              {"mlp_hidden", c.mlp_hidden},
              {"feature_dim", c.feature_dim},
              {"position_frequencies", c.position_frequencies},
              {"direction_frequencies", c.direction_frequencies},
              {"learning_rate", c.learning_rate},
              {"final_lr_fraction", c.final_lr_fraction},
              {"batch_rays", c.batch_rays},
              {"epochs", c.epochs},
              {"eval_every", c.eval_every},
              {"patience", c.patience},
              {"seed", c.seed},
              {"swap_tx_rx", c.swap_tx_rx}};
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  TrainConfig c;
  const json defaults = train_config_to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("unknown train config key '" + key + "'");
  }
  try {
    if (j.contains("task")) c.task = task_from_string(j.at("task").get<std::string>());
    if (j.contains("backbone")) c.backbone = backbone_from(j.at("backbone").get<std::string>());
    c.depth = j.value("depth", c.depth);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.spp_levels = j.value("spp_levels", c.spp_levels);
    c.use_attention_gates = j.value("use_attention_gates", c.use_attention_gates);
    c.use_spp = j.value("use_spp", c.use_spp);
    c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.position_frequencies = j.value("position_frequencies", c.position_frequencies);
    c.direction_frequencies = j.value("direction_frequencies", c.direction_frequencies);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.final_lr_fraction = j.value("final_lr_fraction", c.final_lr_fraction);
    c.batch_rays = j.value("batch_rays", c.batch_rays);
    c.epochs = j.value("epochs", c.epochs);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    c.swap_tx_rx = j.value("swap_tx_rx", c.swap_tx_rx);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

FieldConfig make_field_config(const TrainConfig& cfg, const SceneConfig& scene) {
  FieldConfig f;
  f.backbone.kind = cfg.backbone;
  f.backbone.apt.depth = cfg.depth;
  f.backbone.apt.base_channels = cfg.base_channels;
  f.backbone.apt.spp_levels = cfg.spp_levels;
  f.backbone.apt.use_attention_gates = cfg.use_attention_gates;
  f.backbone.apt.use_spp = cfg.use_spp;
  f.backbone.mlp_hidden = cfg.mlp_hidden;
  if (f.backbone.mlp_hidden.empty()) {
    f.backbone.mlp_hidden.assign(static_cast<std::size_t>(cfg.depth + 2), 4 * cfg.base_channels);
  }
  f.position_encoding = {cfg.position_frequencies, true};
  f.direction_encoding = {cfg.direction_frequencies, true};
  f.feature_dim = cfg.feature_dim;
  f.num_subcarriers = cfg.task == Task::kCsi ? scene.num_subcarriers : 1;
  f.swap_tx_rx = cfg.swap_tx_rx;
  return f;
}

// ---------------------------------------------------------------------------
// Losses and metrics

double loss(const ChannelRecord& prediction, const ChannelRecord& truth, Task task) {
  switch (task) {
    case Task::kCsi: {
      if (!prediction.h || !truth.h) throw DomainError("loss: csi task needs channels on both records");
      const auto& p = prediction.h->h;
      const auto& t = truth.h->h;
      if (p.size() != t.size() || t.empty()) throw DomainError("loss: channel lengths differ");
      double sum = 0.0;
      for (std::size_t k = 0; k < t.size(); ++k) sum += std::norm(p[k] - t[k]);
      return sum / static_cast<double>(t.size());
    }
    case Task::kRssi: {
      if (!prediction.rssi_db || !truth.rssi_db) throw DomainError("loss: rssi task needs rssi on both records");
      const double e = *prediction.rssi_db - *truth.rssi_db;
      return e * e;
    }
    case Task::kSpectrum: {
      if (!prediction.spectrum || !truth.spectrum) throw DomainError("loss: spectrum task needs spectra on both records");
      const auto& p = *prediction.spectrum;
      const auto& t = *truth.spectrum;
      if (p.rows() != t.rows() || p.cols() != t.cols() || t.size() == 0) throw DomainError("loss: spectrum shapes differ");
      return (p - t).squaredNorm() / static_cast<double>(t.size());
    }
  }
  throw DomainError("loss: unknown task");
}

MetricName metric_for(Task task) {
  switch (task) {
    case Task::kRssi:
      return MetricName::kMedianRmseDb;
    case Task::kCsi:
      return MetricName::kSnrDb;
    case Task::kSpectrum:
      return MetricName::kSsim;
  }
  return MetricName::kSnrDb;
}

bool metric_improves(MetricName name, double candidate, double incumbent) {
  if (std::isnan(candidate)) return false;
  if (std::isnan(incumbent)) return true;
  return name == MetricName::kMedianRmseDb ? candidate < incumbent : candidate > incumbent;
}

namespace {

constexpr double kDbPerNeper = 20.0 / 2.302585092994045684;  // 20 / ln 10

/// Differentiable task losses over a rendered batch.
ad::Var csi_loss(const ad::Var& channel, const ad::Matrix& target) {
  const double denom = static_cast<double>(target.rows() / 2) * static_cast<double>(target.cols());
  ad::Matrix diff = channel.value() - target;
  ad::Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() / denom;
  return ad::make_op(std::move(out), 1, 1, {channel}, [diff = std::move(diff), denom](ad::Node& self) {
    self.inputs[0]->accumulate(diff * (2.0 * self.grad(0, 0) / denom));
  });
}

/// Squared dB error of 10·log10|mean_k h|² + offset_db against targets.
ad::Var rssi_loss(const ad::Var& channel, const Eigen::RowVectorXd& target_db, double offset_db) {
  const ad::Matrix& v = channel.value();
  const Eigen::Index k = v.rows() / 2;
  const Eigen::Index b = v.cols();
  Eigen::RowVectorXd re = v.topRows(k).colwise().mean();
  Eigen::RowVectorXd im = v.bottomRows(k).colwise().mean();
  Eigen::RowVectorXd power = re.array().square() + im.array().square();
  power = power.cwiseMax(1e-30);
  Eigen::RowVectorXd err = (10.0 * power.array().log10() + offset_db - target_db.array()).matrix();
  ad::Matrix out(1, 1);
  out(0, 0) = err.squaredNorm() / static_cast<double>(b);
  return ad::make_op(std::move(out), 1, 1, {channel},
                     [re = std::move(re), im = std::move(im), power = std::move(power), err = std::move(err), k,
                      b](ad::Node& self) {
                       ad::Matrix g(2 * k, b);
                       for (Eigen::Index c = 0; c < b; ++c) {
                         // d(10·log10 p)/d re = (20/ln10)·re/p; each subcarrier gets 1/K of it.
                         const double s = self.grad(0, 0) * 2.0 * err(c) / static_cast<double>(b) * kDbPerNeper /
                                          power(c) / static_cast<double>(k);
                         g.col(c).head(k).setConstant(s * re(c));
                         g.col(c).tail(k).setConstant(s * im(c));
                       }
                       self.inputs[0]->accumulate(g);
                     });
}

/// Mean squared error of per-direction power |R|² against spectrum cells.
ad::Var spectrum_loss(const ad::Var& per_direction, const Eigen::RowVectorXd& target) {
  const ad::Matrix& v = per_direction.value();
  const Eigen::Index k = v.rows() / 2;
  const Eigen::Index n = v.cols();
  Eigen::RowVectorXd power = (v.topRows(k).array().square() + v.bottomRows(k).array().square()).colwise().sum() /
                             static_cast<double>(k);
  Eigen::RowVectorXd err = power - target;
  ad::Matrix out(1, 1);
  out(0, 0) = err.squaredNorm() / static_cast<double>(n);
  return ad::make_op(std::move(out), 1, 1, {per_direction}, [err = std::move(err), k, n](ad::Node& self) {
    const ad::Matrix& v = self.inputs[0]->value;
    ad::Matrix g(2 * k, n);
    for (Eigen::Index c = 0; c < n; ++c) {
      const double s = self.grad(0, 0) * 2.0 * err(c) / static_cast<double>(n) * 2.0 / static_cast<double>(k);
      g.col(c) = s * v.col(c);
    }
    self.inputs[0]->accumulate(g);
  });
}

std::vector<LinkQuery> links_of(const std::vector<ChannelRecord>& records, const std::vector<std::size_t>& idx) {
  std::vector<LinkQuery> links;
  links.reserve(idx.size());
  for (std::size_t i : idx) links.push_back({records[i].rx_position, records[i].tx_position});
  return links;
}

int records_per_batch(int batch_rays, const DirectionGrid& grid) {
  return std::max(1, batch_rays / static_cast<int>(grid.size()));
}

void check_task_fields(const std::vector<ChannelRecord>& records, Task task, const SceneConfig& scene,
                       const std::string& what) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const std::string where = what + " record " + std::to_string(i);
    switch (task) {
      case Task::kCsi:
        if (!r.h) throw ConfigError(where + " has no channel");
        if (static_cast<int>(r.h->size()) != scene.num_subcarriers) {
          throw ConfigError(where + " has " + std::to_string(r.h->size()) + " subcarriers, scene declares " +
                            std::to_string(scene.num_subcarriers));
        }
        break;
      case Task::kRssi:
        if (!r.rssi_db) throw ConfigError(where + " has no rssi");
        break;
      case Task::kSpectrum:
        if (!r.spectrum) throw ConfigError(where + " has no spectrum");
        if (r.spectrum->rows() != scene.elevation_bins || r.spectrum->cols() != scene.azimuth_bins) {
          throw ConfigError(where + " spectrum shape does not match the scene direction grid");
        }
        break;
    }
  }
}

}  // namespace

double target_scale_for(const std::vector<ChannelRecord>& records, Task task) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (task == Task::kCsi && r.h) {
      for (const auto& v : r.h->h) sum += std::norm(v);
      n += r.h->size();
    } else if (task == Task::kRssi && r.rssi_db) {
      sum += std::pow(10.0, *r.rssi_db / 10.0);
      ++n;
    }
  }
  if (task == Task::kSpectrum || n == 0 || !(sum > 0.0)) return 1.0;
  return std::sqrt(sum / static_cast<double>(n));
}

std::vector<ChannelRecord> predict(const RadianceFieldModel& model, const std::vector<ChannelRecord>& records,
                                   Task task, double target_scale, int batch_rays) {
  const DirectionGrid grid = DirectionGrid::from_scene(model.scene());
  const int per_batch = records_per_batch(batch_rays, grid);
  const Eigen::Index g = static_cast<Eigen::Index>(grid.size());
  std::vector<ChannelRecord> out;
  out.reserve(records.size());
  for (std::size_t start = 0; start < records.size(); start += static_cast<std::size_t>(per_batch)) {
    const std::size_t end = std::min(records.size(), start + static_cast<std::size_t>(per_batch));
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < end; ++i) idx.push_back(i);
    const auto links = links_of(records, idx);
    RenderVars vars = render_links(model, links, grid);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto col = static_cast<Eigen::Index>(j);
      const ChannelRecord& src = records[idx[j]];
      ChannelRecord rec;
      rec.tx_position = src.tx_position;
      rec.rx_position = src.rx_position;
      rec.tags = src.tags;
      if (task == Task::kSpectrum) {
        const ad::Matrix& pd = vars.per_direction.value();
        const Eigen::Index k = pd.rows() / 2;
        Eigen::MatrixXcd per_dir(k, g);
        for (Eigen::Index c = 0; c < g; ++c) {
          for (Eigen::Index i = 0; i < k; ++i) per_dir(i, c) = {pd(i, col * g + c), pd(k + i, col * g + c)};
        }
        rec.spectrum = spectrum_from_directions(per_dir, grid);
      } else {
        Channel ch;
        ch.h = unpack_complex_column(vars.channel.value(), col);
        for (auto& v : ch.h) v *= target_scale;
        const Complex mean = mean_response(ch);
        rec.rssi_db = std::abs(mean) > 0.0 ? std::max(rssi_db(mean), kRssiFloorDb) : kRssiFloorDb;
        if (task == Task::kCsi) rec.h = std::move(ch);
      }
      out.push_back(std::move(rec));
    }
  }
  return out;
}

MetricReport evaluate(const std::vector<ChannelRecord>& predictions, const std::vector<ChannelRecord>& truth,
                      Task task) {
  if (predictions.size() != truth.size() || truth.empty()) {
    throw DomainError("evaluate: prediction and truth counts differ or are empty");
  }
  MetricReport report;
  report.name = metric_for(task);
  const std::size_t n = truth.size();
  report.per_record.reserve(n);
  switch (task) {
    case Task::kCsi: {
      std::vector<Complex> p;
      std::vector<Complex> t;
      for (std::size_t i = 0; i < n; ++i) {
        if (!predictions[i].h || !truth[i].h) throw DomainError("evaluate: csi records need channels");
        const auto& ph = predictions[i].h->h;
        const auto& th = truth[i].h->h;
        p.insert(p.end(), ph.begin(), ph.end());
        t.insert(t.end(), th.begin(), th.end());
        report.per_record.push_back(snr_db(ph, th));
      }
      report.value = snr_db(p, t);
      break;
    }
    case Task::kRssi: {
      std::vector<double> p;
      std::vector<double> t;
      std::vector<std::string> groups;
      bool tagged = true;
      for (const auto& r : truth) tagged = tagged && r.tags.count("rx") > 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!predictions[i].rssi_db || !truth[i].rssi_db) throw DomainError("evaluate: rssi records need rssi");
        p.push_back(*predictions[i].rssi_db);
        t.push_back(*truth[i].rssi_db);
        groups.push_back(tagged ? truth[i].tags.at("rx") : std::to_string(i));
        report.per_record.push_back(std::abs(p.back() - t.back()));
      }
      report.value = median_rmse(p, t, groups);
      break;
    }
    case Task::kSpectrum: {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!predictions[i].spectrum || !truth[i].spectrum) throw DomainError("evaluate: spectrum records need spectra");
        SsimOptions opts;
        opts.window = fitting_window(truth[i].spectrum->rows(), truth[i].spectrum->cols());
        report.per_record.push_back(ssim(*predictions[i].spectrum, *truth[i].spectrum, opts));
        sum += report.per_record.back();
      }
      report.value = sum / static_cast<double>(n);
      break;
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

constexpr std::uint64_t kShuffleStream = 0x73687566ull;
constexpr std::uint64_t kSamplingStream = 0x73616d70ull;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

struct AdamState {
  std::vector<ad::Matrix> m;
  std::vector<ad::Matrix> v;
};

struct LoopState {
  int epoch = 0;  // completed epochs
  long step = 0;
  double best_metric = std::numeric_limits<double>::quiet_NaN();
  int best_epoch = 0;
  int stale_evals = 0;
  std::vector<MetricPoint> history;
};

// JSON has no infinities; they travel as strings.
json number_or_tag(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double number_from(const json& j) {
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::numeric_limits<double>::quiet_NaN();
}

json state_manifest(const TrainConfig& cfg, const SceneConfig& scene, double target_scale, const LoopState& s) {
  json h = json::array();
  for (const auto& p : s.history) {
    h.push_back(json::array({p.step, p.epoch, number_or_tag(p.train_loss), number_or_tag(p.eval_metric)}));
  }
  return json{{"format", "nerfapt-checkpoint"},
              {"version", 1},
              {"config", train_config_to_json(cfg)},
              {"scene", scene_to_json(scene)},
              {"seed", cfg.seed},
              {"epoch", s.epoch},
              {"step", s.step},
              {"target_scale", target_scale},
              {"best_metric", number_or_tag(s.best_metric)},
              {"best_epoch", s.best_epoch},
              {"stale_evals", s.stale_evals},
              {"metric", to_string(metric_for(cfg.task))},
              {"history", std::move(h)}};
}

NamedArrays state_arrays(const ParamSet& params, const AdamState& adam) {
  NamedArrays arrays;
  const auto& entries = params.entries();
  for (const auto& [name, var] : entries) arrays.emplace_back("param:" + name, var.value());
  for (std::size_t i = 0; i < entries.size(); ++i) arrays.emplace_back("adam_m:" + entries[i].first, adam.m[i]);
  for (std::size_t i = 0; i < entries.size(); ++i) arrays.emplace_back("adam_v:" + entries[i].first, adam.v[i]);
  return arrays;
}

void restore_arrays(ParamSet& params, AdamState* adam, const NamedArrays& arrays) {
  std::map<std::string, const Eigen::MatrixXd*> by_name;
  for (const auto& [name, m] : arrays) by_name[name] = &m;
  auto fetch = [&](const std::string& key, const ad::Matrix& like) -> const Eigen::MatrixXd& {
    auto it = by_name.find(key);
    if (it == by_name.end()) throw ConfigError("checkpoint lacks array " + key);
    if (it->second->rows() != like.rows() || it->second->cols() != like.cols()) {
      throw ConfigError("checkpoint array " + key + " has the wrong shape");
    }
    return *it->second;
  };
  auto& entries = params.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& [name, var] = entries[i];
    var.mutable_value() = fetch("param:" + name, var.value());
    if (adam) {
      adam->m[i] = fetch("adam_m:" + name, var.value());
      adam->v[i] = fetch("adam_v:" + name, var.value());
    }
  }
}

fs::path last_path(const fs::path& base) { return fs::path(base.string() + "-last"); }

double learning_rate_at(const TrainConfig& cfg, long step, long total_steps) {
  const double progress = total_steps > 0 ? std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps)) : 0.0;
  const double cosine = 0.5 * (1.0 + std::cos(kPi * progress));
  return cfg.learning_rate * (cfg.final_lr_fraction + (1.0 - cfg.final_lr_fraction) * cosine);
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const SceneConfig& scene, const std::vector<ChannelRecord>& train_set,
                  const std::vector<ChannelRecord>& eval_set, const TrainOptions& options) {
  cfg.validate();
  scene.validate();
  if (train_set.empty() || eval_set.empty()) throw ConfigError("train: training and evaluation sets must be non-empty");
  check_task_fields(train_set, cfg.task, scene, "training");
  check_task_fields(eval_set, cfg.task, scene, "evaluation");

  TrainResult result;
  result.metric = metric_for(cfg.task);
  result.model = std::make_unique<RadianceFieldModel>(make_field_config(cfg, scene), scene, cfg.seed);
  RadianceFieldModel& model = *result.model;
  ParamSet& params = model.params();
  auto& entries = params.entries();

  AdamState adam;
  for (const auto& [name, var] : entries) {
    adam.m.push_back(ad::Matrix::Zero(var.value().rows(), var.value().cols()));
    adam.v.push_back(ad::Matrix::Zero(var.value().rows(), var.value().cols()));
  }

  LoopState state;
  double scale = target_scale_for(train_set, cfg.task);
  std::vector<ad::Matrix> best_params;

  if (options.resume_from) {
    Checkpoint ckpt = read_checkpoint(*options.resume_from);
    const json& m = ckpt.manifest;
    if (m.value("config", json()) != train_config_to_json(cfg) || m.value("scene", json()) != scene_to_json(scene)) {
      throw ConfigError("resume: checkpoint was written for a different configuration");
    }
    restore_arrays(params, &adam, ckpt.arrays);
    state.epoch = m.at("epoch").get<int>();
    state.step = m.at("step").get<long>();
    scale = m.at("target_scale").get<double>();
    state.best_metric = number_from(m.at("best_metric"));
    state.best_epoch = m.at("best_epoch").get<int>();
    state.stale_evals = m.at("stale_evals").get<int>();
    for (const auto& p : m.at("history")) {
      state.history.push_back({p.at(0).get<long>(), p.at(1).get<int>(), number_from(p.at(2)), number_from(p.at(3))});
    }
    if (!options.checkpoint_base.empty() && fs::exists(options.checkpoint_base.string() + ".ckpt")) {
      const Checkpoint best = read_checkpoint(options.checkpoint_base);
      best_params.resize(entries.size());
      ParamSet probe;
      for (const auto& [name, var] : entries) probe.add(name, var.value());
      restore_arrays(probe, nullptr, best.arrays);
      for (std::size_t i = 0; i < entries.size(); ++i) best_params[i] = probe.entries()[i].second.value();
    }
  }

  const DirectionGrid grid = DirectionGrid::from_scene(scene);
  const int per_batch = records_per_batch(cfg.batch_rays, grid);
  const long steps_per_epoch = static_cast<long>((train_set.size() + per_batch - 1) / per_batch);
  const long total_steps = steps_per_epoch * cfg.epochs;
  const int last_epoch = options.stop_after_epoch > 0 ? std::min(options.stop_after_epoch, cfg.epochs) : cfg.epochs;

  auto save_state = [&](const fs::path& path) {
    if (!options.checkpoint_base.empty()) {
      write_checkpoint(path, state_manifest(cfg, scene, scale, state), state_arrays(params, adam));
    }
  };

  auto targets_for = [&](const std::vector<std::size_t>& idx) {
    ad::Matrix target;
    if (cfg.task == Task::kCsi) {
      const int k = scene.num_subcarriers;
      target.resize(2 * k, static_cast<Eigen::Index>(idx.size()));
      for (std::size_t j = 0; j < idx.size(); ++j) {
        const auto& h = train_set[idx[j]].h->h;
        for (int i = 0; i < k; ++i) {
          target(i, static_cast<Eigen::Index>(j)) = h[static_cast<std::size_t>(i)].real() / scale;
          target(k + i, static_cast<Eigen::Index>(j)) = h[static_cast<std::size_t>(i)].imag() / scale;
        }
      }
    } else if (cfg.task == Task::kRssi) {
      target.resize(1, static_cast<Eigen::Index>(idx.size()));
      for (std::size_t j = 0; j < idx.size(); ++j) target(0, static_cast<Eigen::Index>(j)) = *train_set[idx[j]].rssi_db;
    } else {
      const auto g = static_cast<Eigen::Index>(grid.size());
      target.resize(1, g * static_cast<Eigen::Index>(idx.size()));
      for (std::size_t j = 0; j < idx.size(); ++j) {
        const auto& s = *train_set[idx[j]].spectrum;
        for (int e = 0; e < grid.elevation_bins; ++e) {
          for (int a = 0; a < grid.azimuth_bins; ++a) {
            target(0, static_cast<Eigen::Index>(j) * g + e * grid.azimuth_bins + a) = s(e, a);
          }
        }
      }
    }
    return target;
  };

  const double rssi_offset_db = 20.0 * std::log10(scale);

  while (state.epoch < last_epoch) {
    const int epoch = state.epoch;
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle = Rng::derive(cfg.seed ^ kShuffleStream, static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[shuffle.below(i + 1)]);

    double loss_sum = 0.0;
    long loss_count = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(per_batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(per_batch));
      const std::vector<std::size_t> idx(order.begin() + static_cast<long>(start), order.begin() + static_cast<long>(end));
      const auto links = links_of(train_set, idx);
      Rng sampling = Rng::derive(cfg.seed ^ kSamplingStream, static_cast<std::uint64_t>(state.step));

      ad::Var objective;
      try {
        RenderVars vars = render_links(model, links, grid, SamplingMode::kStratified, &sampling);
        const ad::Matrix target = targets_for(idx);
        if (cfg.task == Task::kCsi) {
          objective = csi_loss(vars.channel, target);
        } else if (cfg.task == Task::kRssi) {
          objective = rssi_loss(vars.channel, target.row(0), rssi_offset_db);
        } else {
          objective = spectrum_loss(vars.per_direction, target.row(0));
        }
      } catch (const NumericalError& e) {
        save_state(last_path(options.checkpoint_base));
        throw NumericalError(std::string("training diverged at step ") + std::to_string(state.step) + ": " + e.what());
      }
      const double value = objective.value()(0, 0);
      params.zero_grad();
      ad::backward(objective);
      bool finite = std::isfinite(value);
      for (const auto& [name, var] : entries) {
        if (var.grad().size() != 0 && !var.grad().allFinite()) finite = false;
      }
      if (!finite) {
        save_state(last_path(options.checkpoint_base));
        throw NumericalError("training diverged at step " + std::to_string(state.step) + " (epoch " +
                             std::to_string(epoch) + "): non-finite loss or gradient" +
                             (options.checkpoint_base.empty()
                                  ? std::string()
                                  : "; last good state saved to " + last_path(options.checkpoint_base).string()));
      }

      const double lr = learning_rate_at(cfg, state.step, total_steps);
      ++state.step;
      const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
      const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
      for (std::size_t i = 0; i < entries.size(); ++i) {
        ad::Var& var = entries[i].second;
        if (var.grad().size() == 0) continue;
        const ad::Matrix& g = var.grad();
        adam.m[i] = kAdamBeta1 * adam.m[i] + (1.0 - kAdamBeta1) * g;
        adam.v[i] = kAdamBeta2 * adam.v[i] + (1.0 - kAdamBeta2) * g.cwiseProduct(g);
        var.mutable_value().array() -=
            lr * (adam.m[i].array() / c1) / ((adam.v[i].array() / c2).sqrt() + kAdamEps);
      }
      params.zero_grad();
      loss_sum += value;
      ++loss_count;
    }
    state.epoch = epoch + 1;

    const bool do_eval = state.epoch % cfg.eval_every == 0 || state.epoch == cfg.epochs;
    if (do_eval) {
      const auto predictions = predict(model, eval_set, cfg.task, scale, cfg.batch_rays);
      const MetricReport report = evaluate(predictions, eval_set, cfg.task);
      MetricPoint point{state.step, state.epoch, loss_sum / static_cast<double>(std::max(1L, loss_count)), report.value};
      state.history.push_back(point);
      if (options.on_eval) options.on_eval(point);
      if (metric_improves(result.metric, report.value, state.best_metric)) {
        state.best_metric = report.value;
        state.best_epoch = state.epoch;
        state.stale_evals = 0;
        best_params.resize(entries.size());
        for (std::size_t i = 0; i < entries.size(); ++i) best_params[i] = entries[i].second.value();
        save_state(options.checkpoint_base);
      } else {
        ++state.stale_evals;
      }
      save_state(last_path(options.checkpoint_base));
      if (state.stale_evals >= cfg.patience) {
        result.stopped_early = true;
        break;
      }
    } else {
      save_state(last_path(options.checkpoint_base));
    }
  }

  if (!best_params.empty()) {
    for (std::size_t i = 0; i < entries.size(); ++i) entries[i].second.mutable_value() = best_params[i];
  }
  result.history = state.history;
  result.best_metric = state.best_metric;
  result.best_epoch = state.best_epoch;
  result.epochs_run = state.epoch;
  result.steps = state.step;
  result.target_scale = scale;
  return result;
}

LoadedModel load_model(const fs::path& checkpoint_base) {
  Checkpoint ckpt = read_checkpoint(checkpoint_base);
  LoadedModel out;
  try {
    out.config = train_config_from_json(ckpt.manifest.at("config"));
    out.scene = scene_from_json(ckpt.manifest.at("scene"));
    out.target_scale = ckpt.manifest.at("target_scale").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint manifest: ") + e.what());
  }
  out.model = std::make_unique<RadianceFieldModel>(make_field_config(out.config, out.scene), out.scene, out.config.seed);
  restore_arrays(out.model->params(), nullptr, ckpt.arrays);
  return out;
}

void write_history_csv(const fs::path& path, const std::vector<MetricPoint>& history) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "step,train_loss,eval_metric\n";
  out << std::setprecision(17);
  for (const auto& p : history) out << p.step << ',' << p.train_loss << ',' << p.eval_metric << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// Depth matrix

std::string structure_label(Structure s, int depth) {
  const std::string layers = std::to_string(depth) + (depth == 1 ? " Layer)" : " Layers)");
  switch (s) {
    case Structure::kApt:
      return "NeRF-APT (" + layers;
    case Structure::kUNet:
      return "NeRF-U-Net (" + layers;
    case Structure::kMlp:
      return "MLP (" + layers;
  }
  return "?";
}

std::vector<DepthMatrixRow> run_depth_matrix(const TrainConfig& base, const SceneConfig& scene,
                                             const std::vector<ChannelRecord>& train_set,
                                             const std::vector<ChannelRecord>& eval_set,
                                             const std::vector<int>& depths, const std::vector<Structure>& structures) {
  std::vector<DepthMatrixRow> rows;
  for (Structure s : structures) {
    for (int depth : depths) {
      TrainConfig cfg = base;
      cfg.depth = depth;
      cfg.backbone = s == Structure::kMlp ? BackboneKind::kMlp : BackboneKind::kApt;
      cfg.use_attention_gates = s == Structure::kApt;
      cfg.use_spp = s == Structure::kApt;
      if (s == Structure::kMlp) cfg.mlp_hidden.clear();
      const auto t0 = std::chrono::steady_clock::now();
      TrainResult r = train(cfg, scene, train_set, eval_set);
      const auto t1 = std::chrono::steady_clock::now();
      rows.push_back({s, depth, r.best_metric, r.model->params().scalar_count(),
                      std::chrono::duration<double>(t1 - t0).count()});
    }
  }
  return rows;
}

std::string format_depth_table(const std::vector<std::string>& column_labels,
                               const std::vector<std::vector<DepthMatrixRow>>& columns) {
  if (columns.empty() || column_labels.size() != columns.size()) {
    throw ConfigError("format_depth_table: one label per column required");
  }
  std::vector<std::string> labels;
  for (const auto& row : columns.front()) labels.push_back(structure_label(row.structure, row.depth));
  std::size_t label_width = 0;
  for (const auto& l : labels) label_width = std::max(label_width, l.size());
  std::vector<std::size_t> widths;
  for (const auto& c : column_labels) widths.push_back(std::max<std::size_t>(c.size(), 8));

  std::ostringstream out;
  auto rule = [&] {
    out << '+' << std::string(label_width + 2, '-');
    for (auto w : widths) out << '+' << std::string(w + 2, '-');
    out << "+\n";
  };
  rule();
  out << "| " << std::left << std::setw(static_cast<int>(label_width)) << "" << ' ';
  for (std::size_t c = 0; c < column_labels.size(); ++c) {
    out << "| " << std::setw(static_cast<int>(widths[c])) << column_labels[c] << ' ';
  }
  out << "|\n";
  rule();
  for (std::size_t r = 0; r < labels.size(); ++r) {
    out << "| " << std::left << std::setw(static_cast<int>(label_width)) << labels[r] << ' ';
    for (std::size_t c = 0; c < columns.size(); ++c) {
      std::ostringstream cell;
      if (r < columns[c].size()) {
        cell << std::fixed << std::setprecision(2) << columns[c][r].metric;
      } else {
        cell << "-";
      }
      out << "| " << std::right << std::setw(static_cast<int>(widths[c])) << cell.str() << ' ';
    }
    out << "|\n";
  }
  rule();
  return out.str();
}

}  // namespace nerfapt
