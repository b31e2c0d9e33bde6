// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "nerfapt/core.hpp"
#include "nerfapt/scene.hpp"

namespace nerfapt {

enum class Task { kRssi, kCsi, kSpectrum };

std::string to_string(Task task);
Task task_from_string(const std::string& name);

/// One measurement. At least one of h / rssi_db / spectrum is present.
struct ChannelRecord {
  Position3 tx_position = Position3::Zero();
  Position3 rx_position = Position3::Zero();
  std::optional<Channel> h;
  std::optional<double> rssi_db;
  std::optional<Eigen::MatrixXd> spectrum;  // elevation × azimuth, values in [0, 1]
  std::map<std::string, std::string> tags;

  /// Throws ConfigError on a violated invariant.
  void validate() const;
  bool operator==(const ChannelRecord& other) const;
};

struct DatasetManifest {
  Task task = Task::kCsi;
  SceneConfig scene;
  std::size_t record_count = 0;
  int schema_version = 1;
  std::uint64_t split_seed = 0;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<ChannelRecord> records;
};

inline constexpr int kDatasetSchemaVersion = 1;

/// Writes `<base>.ndrec` (one JSON object per line) and `<base>.manifest`.
/// `manifest.record_count` is overwritten with records.size().
void write_dataset(const std::vector<ChannelRecord>& records, DatasetManifest manifest,
                   const std::filesystem::path& base);

/// Reads a dataset written by write_dataset. `base` may name the manifest,
/// the record file, or the common stem. Throws IoError / ConfigError.
Dataset read_dataset(const std::filesystem::path& base);

/// Deterministic shuffled split: train gets floor(n·fraction) records
/// (kept within [1, n-1]), eval the remainder.
std::pair<std::vector<ChannelRecord>, std::vector<ChannelRecord>> split_dataset(
    const std::vector<ChannelRecord>& records, double fraction, std::uint64_t seed);

nlohmann::json scene_to_json(const SceneConfig& scene);
SceneConfig scene_from_json(const nlohmann::json& j);
nlohmann::json record_to_json(const ChannelRecord& record);
ChannelRecord record_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Checkpoints: a binary named-array archive plus a JSON manifest.
//
// Archive layout (little endian):
//   magic "NRFAPTCK" | u32 version | u32 array_count |
//   per array: u32 name_len | name bytes | u64 rows | u64 cols | rows·cols f64 (column-major)

using NamedArrays = std::vector<std::pair<std::string, Eigen::MatrixXd>>;

void write_array_archive(const std::filesystem::path& path, const NamedArrays& arrays);
NamedArrays read_array_archive(const std::filesystem::path& path);

/// `<base>.ckpt` + `<base>.ckpt.json`; the manifest gains an "arrays" list of
/// {name, rows, cols}.
void write_checkpoint(const std::filesystem::path& base, nlohmann::json manifest, const NamedArrays& arrays);

struct Checkpoint {
  nlohmann::json manifest;
  NamedArrays arrays;
};
Checkpoint read_checkpoint(const std::filesystem::path& base);

// ---------------------------------------------------------------------------
// Spectrum exports: row = elevation bin, column = azimuth bin.

/// Binary PGM (P5), value = round(clamp(v, 0, 1) · 255).
void write_spectrum_image(const std::filesystem::path& path, const Eigen::MatrixXd& spectrum);
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m);

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};
GrayImage read_spectrum_image(const std::filesystem::path& path);

}  // namespace nerfapt
