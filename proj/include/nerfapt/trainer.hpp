// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nerfapt/aptnet.hpp"
#include "nerfapt/dataio.hpp"
#include "nerfapt/fields.hpp"
#include "nerfapt/metrics.hpp"
#include "nerfapt/scene.hpp"

namespace nerfapt {

struct TrainConfig {
  Task task = Task::kCsi;
  BackboneKind backbone = BackboneKind::kApt;
  int depth = 2;
  int base_channels = 16;
  std::vector<int> spp_levels{4, 2, 1};
  bool use_attention_gates = true;
  bool use_spp = true;
  std::vector<int> mlp_hidden;  // empty: depth + 2 layers of width 4 · base_channels
  int feature_dim = 32;
  int position_frequencies = 10;
  int direction_frequencies = 4;
  double learning_rate = 5e-4;
  double final_lr_fraction = 0.1;  // cosine decay floor, as a fraction of learning_rate
  int batch_rays = 1024;
  int epochs = 1;
  int eval_every = 1;  // epochs between evaluations
  int patience = 10;   // evaluations without improvement before stopping
  std::uint64_t seed = 0;
  bool swap_tx_rx = false;

  /// Throws ConfigError.
  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
/// Keys absent from `j` keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Field-network configuration implied by a training config.
FieldConfig make_field_config(const TrainConfig& cfg, const SceneConfig& scene);

/// Value-level loss of a predicted record against ground truth.
/// csi: Σ_k |Ĥ_k - H_k|² / K; rssi: squared dB error; spectrum: mean squared
/// per-cell error. Throws DomainError when the fields needed are missing or
/// differ in shape.
double loss(const ChannelRecord& prediction, const ChannelRecord& truth, Task task);

/// Metric reported for each task.
MetricName metric_for(Task task);
/// True when `candidate` improves on `incumbent` for this metric.
bool metric_improves(MetricName name, double candidate, double incumbent);

/// Deterministic predictions for the links in `records`. Channel outputs are
/// multiplied by `target_scale`.
std::vector<ChannelRecord> predict(const RadianceFieldModel& model, const std::vector<ChannelRecord>& records,
                                   Task task, double target_scale, int batch_rays = 1024);

/// Task metric of predictions against ground truth, computed by the metrics
/// module. rssi groups by the "rx" tag when every record carries one.
MetricReport evaluate(const std::vector<ChannelRecord>& predictions, const std::vector<ChannelRecord>& truth,
                      Task task);

struct MetricPoint {
  long step = 0;
  int epoch = 0;
  double train_loss = 0.0;
  double eval_metric = 0.0;
};

struct TrainOptions {
  /// Best checkpoint goes to `<checkpoint_base>.ckpt`, resumable state to
  /// `<checkpoint_base>-last.ckpt`. Empty disables checkpoint files.
  std::filesystem::path checkpoint_base;
  std::optional<std::filesystem::path> resume_from;
  /// Stop after this many completed epochs in total (0: run cfg.epochs).
  int stop_after_epoch = 0;
  std::function<void(const MetricPoint&)> on_eval;
};

struct TrainResult {
  std::unique_ptr<RadianceFieldModel> model;  // best evaluated parameters
  std::vector<MetricPoint> history;
  MetricName metric = MetricName::kSnrDb;
  double best_metric = 0.0;
  int best_epoch = 0;
  int epochs_run = 0;
  long steps = 0;
  double target_scale = 1.0;
  bool stopped_early = false;
};

/// Adam with cosine learning-rate decay. Throws NumericalError when the loss
/// or a gradient turns non-finite, after saving the last good state.
TrainResult train(const TrainConfig& cfg, const SceneConfig& scene, const std::vector<ChannelRecord>& train_set,
                  const std::vector<ChannelRecord>& eval_set, const TrainOptions& options = {});

/// Scale dividing channel targets during training: RMS |H| for csi, RMS of
/// the linear RSSI amplitude for rssi, 1 for spectrum.
double target_scale_for(const std::vector<ChannelRecord>& records, Task task);

struct LoadedModel {
  TrainConfig config;
  SceneConfig scene;
  double target_scale = 1.0;
  std::unique_ptr<RadianceFieldModel> model;
};

LoadedModel load_model(const std::filesystem::path& checkpoint_base);

/// Writes the metric history as CSV with header step,train_loss,eval_metric.
void write_history_csv(const std::filesystem::path& path, const std::vector<MetricPoint>& history);

// ---------------------------------------------------------------------------
// Structure comparison over depths.

enum class Structure { kApt, kUNet, kMlp };

std::string structure_label(Structure s, int depth);

struct DepthMatrixRow {
  Structure structure = Structure::kApt;
  int depth = 1;
  double metric = 0.0;
  std::size_t parameters = 0;
  double seconds = 0.0;
};

/// Trains every (structure, depth) pair with otherwise identical settings.
std::vector<DepthMatrixRow> run_depth_matrix(const TrainConfig& base, const SceneConfig& scene,
                                             const std::vector<ChannelRecord>& train_set,
                                             const std::vector<ChannelRecord>& eval_set,
                                             const std::vector<int>& depths, const std::vector<Structure>& structures);

/// Text table: one row per structure, one column per dataset label.
std::string format_depth_table(const std::vector<std::string>& column_labels,
                               const std::vector<std::vector<DepthMatrixRow>>& columns);

}  // namespace nerfapt
