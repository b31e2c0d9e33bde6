// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "nerfapt/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "nerfapt/errors.hpp"
#include "nerfapt/random.hpp"

namespace nerfapt {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Task task) {
  switch (task) {
    case Task::kRssi:
      return "rssi";
    case Task::kCsi:
      return "csi";
    case Task::kSpectrum:
      return "spectrum";
  }
  return "csi";
}

Task task_from_string(const std::string& name) {
  if (name == "rssi") return Task::kRssi;
  if (name == "csi") return Task::kCsi;
  if (name == "spectrum") return Task::kSpectrum;
  throw ConfigError("unknown task '" + name + "' (expected rssi, csi or spectrum)");
}

void ChannelRecord::validate() const {
  if (!h && !rssi_db && !spectrum) throw ConfigError("record carries no channel, rssi or spectrum");
  if (!tx_position.allFinite() || !rx_position.allFinite()) throw ConfigError("record position is not finite");
  if (h) {
    if (h->h.empty()) throw ConfigError("record channel is empty");
    for (const auto& v : h->h) {
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) throw ConfigError("record channel is not finite");
    }
  }
  if (rssi_db && !std::isfinite(*rssi_db)) throw ConfigError("record rssi is not finite");
  if (spectrum) {
    if (spectrum->size() == 0) throw ConfigError("record spectrum is empty");
    if (!spectrum->allFinite() || spectrum->minCoeff() < 0.0 || spectrum->maxCoeff() > 1.0) {
      throw ConfigError("record spectrum values must lie in [0, 1]");
    }
  }
}

bool ChannelRecord::operator==(const ChannelRecord& other) const {
  const bool spectra_equal =
      spectrum.has_value() == other.spectrum.has_value() &&
      (!spectrum || (spectrum->rows() == other.spectrum->rows() && spectrum->cols() == other.spectrum->cols() &&
                     *spectrum == *other.spectrum));
  return tx_position == other.tx_position && rx_position == other.rx_position && h == other.h &&
         rssi_db == other.rssi_db && spectra_equal && tags == other.tags;
}

// ---------------------------------------------------------------------------
// JSON mapping

namespace {

json vec3(const Position3& p) { return json::array({p.x(), p.y(), p.z()}); }

Position3 vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

json scene_to_json(const SceneConfig& s) {
  return json{{"bounds_min", vec3(s.bounds_min)},
              {"bounds_max", vec3(s.bounds_max)},
              {"azimuth_bins", s.azimuth_bins},
              {"elevation_bins", s.elevation_bins},
              {"full_sphere", s.full_sphere},
              {"samples_per_ray", s.samples_per_ray},
              {"max_distance", s.max_distance},
              {"carrier_hz", s.carrier_hz},
              {"num_subcarriers", s.num_subcarriers},
              {"subcarrier_spacing_hz", s.subcarrier_spacing_hz}};
}

SceneConfig scene_from_json(const json& j) {
  SceneConfig s;
  try {
    if (j.contains("bounds_min")) s.bounds_min = vec3_from(j.at("bounds_min"));
    if (j.contains("bounds_max")) s.bounds_max = vec3_from(j.at("bounds_max"));
    s.azimuth_bins = j.value("azimuth_bins", s.azimuth_bins);
    s.elevation_bins = j.value("elevation_bins", s.elevation_bins);
    s.full_sphere = j.value("full_sphere", s.full_sphere);
    s.samples_per_ray = j.value("samples_per_ray", s.samples_per_ray);
    s.max_distance = j.value("max_distance", s.max_distance);
    s.carrier_hz = j.value("carrier_hz", s.carrier_hz);
    s.num_subcarriers = j.value("num_subcarriers", s.num_subcarriers);
    s.subcarrier_spacing_hz = j.value("subcarrier_spacing_hz", s.subcarrier_spacing_hz);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scene: ") + e.what());
  }
  s.validate();
  return s;
}

json record_to_json(const ChannelRecord& r) {
  json j;
  j["tx"] = vec3(r.tx_position);
  j["rx"] = vec3(r.rx_position);
  if (r.h) {
    json h = json::array();
    for (const auto& v : r.h->h) h.push_back(json::array({v.real(), v.imag()}));
    j["h"] = std::move(h);
  }
  if (r.rssi_db) j["rssi_db"] = *r.rssi_db;
  if (r.spectrum) {
    json values = json::array();
    for (Eigen::Index e = 0; e < r.spectrum->rows(); ++e) {
      for (Eigen::Index a = 0; a < r.spectrum->cols(); ++a) values.push_back((*r.spectrum)(e, a));
    }
    j["spectrum"] = json{{"rows", r.spectrum->rows()}, {"cols", r.spectrum->cols()}, {"values", std::move(values)}};
  }
  if (!r.tags.empty()) j["tags"] = r.tags;
  return j;
}

ChannelRecord record_from_json(const json& j) {
  ChannelRecord r;
  try {
    r.tx_position = vec3_from(j.at("tx"));
    r.rx_position = vec3_from(j.at("rx"));
    if (j.contains("h")) {
      Channel c;
      for (const auto& v : j.at("h")) c.h.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
      r.h = std::move(c);
    }
    if (j.contains("rssi_db")) r.rssi_db = j.at("rssi_db").get<double>();
    if (j.contains("spectrum")) {
      const auto& s = j.at("spectrum");
      const auto rows = s.at("rows").get<Eigen::Index>();
      const auto cols = s.at("cols").get<Eigen::Index>();
      const auto& values = s.at("values");
      if (static_cast<Eigen::Index>(values.size()) != rows * cols) {
        throw ConfigError("spectrum value count does not match its shape");
      }
      Eigen::MatrixXd m(rows, cols);
      for (Eigen::Index e = 0; e < rows; ++e) {
        for (Eigen::Index a = 0; a < cols; ++a) m(e, a) = values.at(static_cast<std::size_t>(e * cols + a)).get<double>();
      }
      r.spectrum = std::move(m);
    }
    if (j.contains("tags")) r.tags = j.at("tags").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed record: ") + e.what());
  }
  r.validate();
  return r;
}

// ---------------------------------------------------------------------------
// Dataset files

namespace {

fs::path stem_of(const fs::path& base) {
  const auto ext = base.extension();
  if (ext == ".ndrec" || ext == ".manifest") return fs::path(base).replace_extension();
  return base;
}

fs::path with_suffix(const fs::path& stem, const std::string& suffix) {
  return fs::path(stem.string() + suffix);
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

void write_dataset(const std::vector<ChannelRecord>& records, DatasetManifest manifest, const fs::path& base) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      records[i].validate();
    } catch (const ConfigError& e) {
      throw ConfigError("record " + std::to_string(i) + ": " + e.what());
    }
  }
  const fs::path stem = stem_of(base);
  manifest.record_count = records.size();
  manifest.schema_version = kDatasetSchemaVersion;

  const fs::path record_path = with_suffix(stem, ".ndrec");
  {
    std::ofstream out = open_out(record_path, std::ios::out | std::ios::binary);
    for (const auto& r : records) out << record_to_json(r).dump() << '\n';
    if (!out) throw IoError("failed writing " + record_path.string());
  }
  json m{{"schema_version", manifest.schema_version},
         {"task", to_string(manifest.task)},
         {"record_count", manifest.record_count},
         {"split_seed", manifest.split_seed},
         {"scene", scene_to_json(manifest.scene)},
         {"records", record_path.filename().string()}};
  std::ofstream out = open_out(with_suffix(stem, ".manifest"), std::ios::out | std::ios::binary);
  out << m.dump(2) << '\n';
  if (!out) throw IoError("failed writing manifest for " + stem.string());
}

Dataset read_dataset(const fs::path& base) {
  const fs::path stem = stem_of(base);
  const fs::path manifest_path = with_suffix(stem, ".manifest");
  std::ifstream min(manifest_path);
  if (!min) throw IoError("cannot open " + manifest_path.string());
  Dataset ds;
  json m;
  try {
    m = json::parse(min);
    ds.manifest.schema_version = m.at("schema_version").get<int>();
    ds.manifest.task = task_from_string(m.at("task").get<std::string>());
    ds.manifest.record_count = m.at("record_count").get<std::size_t>();
    ds.manifest.split_seed = m.value("split_seed", std::uint64_t{0});
    ds.manifest.scene = scene_from_json(m.at("scene"));
  } catch (const json::exception& e) {
    throw ConfigError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  if (ds.manifest.schema_version != kDatasetSchemaVersion) {
    throw ConfigError("unsupported dataset schema version " + std::to_string(ds.manifest.schema_version));
  }

  const fs::path record_path = manifest_path.parent_path() / m.value("records", with_suffix(stem, ".ndrec").filename().string());
  std::ifstream rin(record_path);
  if (!rin) throw IoError("cannot open " + record_path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(rin, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      ds.records.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ConfigError(record_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError(record_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (ds.records.size() != ds.manifest.record_count) {
    throw ConfigError("manifest declares " + std::to_string(ds.manifest.record_count) + " records but " +
                      record_path.string() + " holds " + std::to_string(ds.records.size()));
  }
  return ds;
}

std::pair<std::vector<ChannelRecord>, std::vector<ChannelRecord>> split_dataset(
    const std::vector<ChannelRecord>& records, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw DomainError("split_dataset: fraction must lie in (0, 1)");
  const std::size_t n = records.size();
  if (n < 2) throw DomainError("split_dataset: need at least two records");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

  auto train_size = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction));
  train_size = std::clamp<std::size_t>(train_size, 1, n - 1);
  std::pair<std::vector<ChannelRecord>, std::vector<ChannelRecord>> out;
  out.first.reserve(train_size);
  out.second.reserve(n - train_size);
  for (std::size_t i = 0; i < n; ++i) {
    (i < train_size ? out.first : out.second).push_back(records[order[i]]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Named-array archive

namespace {

constexpr char kArchiveMagic[8] = {'N', 'R', 'F', 'A', 'P', 'T', 'C', 'K'};
constexpr std::uint32_t kArchiveVersion = 1;

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const fs::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated archive " + path.string());
  return v;
}

}  // namespace

void write_array_archive(const fs::path& path, const NamedArrays& arrays) {
  std::ofstream out = open_out(path, std::ios::out | std::ios::binary);
  out.write(kArchiveMagic, sizeof(kArchiveMagic));
  put<std::uint32_t>(out, kArchiveVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, m] : arrays) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

NamedArrays read_array_archive(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[sizeof(kArchiveMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kArchiveMagic, sizeof(magic)) != 0) {
    throw IoError(path.string() + " is not a checkpoint archive");
  }
  if (get<std::uint32_t>(in, path) != kArchiveVersion) throw IoError("unsupported archive version in " + path.string());
  const auto count = get<std::uint32_t>(in, path);
  NamedArrays arrays;
  arrays.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in, path);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rows = get<std::uint64_t>(in, path);
    const auto cols = get<std::uint64_t>(in, path);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw IoError("truncated archive " + path.string());
    arrays.emplace_back(std::move(name), std::move(m));
  }
  return arrays;
}

namespace {

fs::path checkpoint_stem(const fs::path& base) {
  const std::string s = base.string();
  if (s.size() > 10 && s.ends_with(".ckpt.json")) return fs::path(s.substr(0, s.size() - 10));
  if (base.extension() == ".ckpt") return fs::path(base).replace_extension();
  return base;
}

}  // namespace

void write_checkpoint(const fs::path& base, json manifest, const NamedArrays& arrays) {
  const fs::path stem = checkpoint_stem(base);
  json listing = json::array();
  for (const auto& [name, m] : arrays) listing.push_back(json{{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  manifest["arrays"] = std::move(listing);
  manifest["archive"] = with_suffix(stem, ".ckpt").filename().string();
  write_array_archive(with_suffix(stem, ".ckpt"), arrays);
  std::ofstream out = open_out(with_suffix(stem, ".ckpt.json"));
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("failed writing checkpoint manifest for " + stem.string());
}

Checkpoint read_checkpoint(const fs::path& base) {
  const fs::path stem = checkpoint_stem(base);
  std::ifstream in(with_suffix(stem, ".ckpt.json"));
  if (!in) throw IoError("cannot open " + with_suffix(stem, ".ckpt.json").string());
  Checkpoint ckpt;
  try {
    ckpt.manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  ckpt.arrays = read_array_archive(with_suffix(stem, ".ckpt"));
  const auto& listing = ckpt.manifest.value("arrays", json::array());
  if (listing.size() != ckpt.arrays.size()) throw ConfigError("checkpoint manifest and archive disagree on array count");
  for (std::size_t i = 0; i < listing.size(); ++i) {
    const auto& [name, m] = ckpt.arrays[i];
    if (listing[i].value("name", "") != name || listing[i].value("rows", -1L) != m.rows() ||
        listing[i].value("cols", -1L) != m.cols()) {
      throw ConfigError("checkpoint manifest does not describe archive entry " + name);
    }
  }
  return ckpt;
}

// ---------------------------------------------------------------------------
// Spectrum exports

void write_spectrum_image(const fs::path& path, const Eigen::MatrixXd& spectrum) {
  std::ofstream out = open_out(path, std::ios::out | std::ios::binary);
  out << "P5\n" << spectrum.cols() << ' ' << spectrum.rows() << "\n255\n";
  for (Eigen::Index e = 0; e < spectrum.rows(); ++e) {
    for (Eigen::Index a = 0; a < spectrum.cols(); ++a) {
      const double v = std::clamp(spectrum(e, a), 0.0, 1.0);
      out.put(static_cast<char>(static_cast<std::uint8_t>(std::lround(v * 255.0))));
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

GrayImage read_spectrum_image(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  int maxval = 0;
  GrayImage img;
  in >> magic >> img.width >> img.height >> maxval;
  in.get();
  if (magic != "P5" || maxval != 255 || img.width < 1 || img.height < 1) {
    throw IoError(path.string() + " is not an 8-bit PGM image");
  }
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw IoError("truncated image " + path.string());
  return img;
}

void write_matrix_csv(const fs::path& path, const Eigen::MatrixXd& m) {
  std::ofstream out = open_out(path);
  out.precision(17);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ',';
      out << m(r, c);
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace nerfapt
