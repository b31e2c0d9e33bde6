// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "nerfapt/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "nerfapt/dataio.hpp"
#include "nerfapt/errors.hpp"
#include "nerfapt/metrics.hpp"
#include "nerfapt/raytrace.hpp"
#include "nerfapt/synth.hpp"
#include "nerfapt/trainer.hpp"

namespace nerfapt::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json split_defaults(const char* subset) {
  return json{{"fraction", 0.8}, {"seed", nullptr}, {"subset", subset}};
}

json scene_override_defaults() {
  return json{{"azimuth_bins", nullptr},
              {"elevation_bins", nullptr},
              {"full_sphere", nullptr},
              {"samples_per_ray", nullptr},
              {"max_distance", nullptr}};
}

}  // namespace

std::vector<std::string> subcommands() { return {"synth-gen", "train", "eval", "predict", "plot-spectrum"}; }

json default_config(const std::string& sub) {
  if (sub == "synth-gen") {
    const RoomSpec room;
    const SceneConfig scene;
    return json{{"name", "dataset"},
                {"task", "csi"},
                {"room",
                 {{"preset", "bedroom"},
                  {"dimensions", nullptr},
                  {"reflection_coeff", nullptr},
                  {"max_order", room.max_order},
                  {"carrier_hz", room.carrier_hz},
                  {"num_subcarriers", room.num_subcarriers},
                  {"subcarrier_spacing_hz", room.subcarrier_spacing_hz}}},
                {"placement", {{"num_tx", 100}, {"num_rx", 5}, {"margin", 0.25}, {"min_separation", 0.1}}},
                {"seed", 1},
                {"noise_db", nullptr},
                {"split_seed", 0},
                {"scene",
                 {{"azimuth_bins", scene.azimuth_bins},
                  {"elevation_bins", scene.elevation_bins},
                  {"full_sphere", scene.full_sphere},
                  {"samples_per_ray", scene.samples_per_ray},
                  {"max_distance", scene.max_distance}}}};
  }
  if (sub == "train") {
    return json{{"dataset", ""},
                {"split", split_defaults("eval")},
                {"scene", scene_override_defaults()},
                {"train", train_config_to_json(TrainConfig{})},
                {"resume", false}};
  }
  if (sub == "eval" || sub == "predict") {
    return json{{"dataset", ""}, {"checkpoint", ""}, {"split", split_defaults("eval")}, {"batch_rays", 1024}};
  }
  if (sub == "plot-spectrum") {
    return json{{"dataset", ""}, {"checkpoint", ""}, {"record", 0}, {"split", split_defaults("all")}};
  }
  throw ConfigError("unknown subcommand '" + sub + "'");
}

namespace {

void merge_checked(json& target, const json& source, const std::string& path) {
  if (!source.is_object()) throw ConfigError("config section '" + (path.empty() ? "<root>" : path) + "' must be an object");
  for (const auto& [key, value] : source.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!target.contains(key)) throw ConfigError("unknown config key '" + full + "'");
    json& slot = target[key];
    if (slot.is_object() && !slot.empty()) {
      merge_checked(slot, value, full);
    } else {
      slot = value;
    }
  }
}

json parse_override_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return text;
  }
}

void describe(const json& node, const std::string& path, std::ostringstream& out) {
  for (const auto& [key, value] : node.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (value.is_object() && !value.empty()) {
      describe(value, full, out);
    } else {
      out << "  " << full << " = " << value.dump() << '\n';
    }
  }
}

}  // namespace

json resolve_config(const std::string& sub, const fs::path& config_path, const std::vector<std::string>& overrides) {
  json cfg = default_config(sub);
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw IoError("cannot open config file " + config_path.string());
    json file;
    try {
      file = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config file " + config_path.string() + ": " + e.what());
    }
    merge_checked(cfg, file, "");
  }
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + ov + "' is not of the form key=value");
    const std::string key = ov.substr(0, eq);
    json* slot = &cfg;
    std::size_t start = 0;
    for (;;) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (!slot->is_object() || !slot->contains(part)) throw ConfigError("unknown config key '" + key + "'");
      slot = &(*slot)[part];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    if (slot->is_object() && !slot->empty()) throw ConfigError("config key '" + key + "' names a section");
    *slot = parse_override_value(ov.substr(eq + 1));
  }
  return cfg;
}

std::string describe_keys(const std::string& sub) {
  std::ostringstream out;
  describe(default_config(sub), "", out);
  return out.str();
}

// ---------------------------------------------------------------------------
// Subcommand bodies

namespace {

/// Files written by one invocation, removed again if it fails.
class OutputSet {
 public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}

  fs::path claim(const std::string& name) {
    fs::path p = dir_ / name;
    files_.push_back(p);
    return p;
  }
  void keep(const fs::path& p) { kept_.push_back(p); }
  void remove_all() const {
    std::error_code ec;
    for (const auto& f : files_) {
      if (std::find(kept_.begin(), kept_.end(), f) == kept_.end()) fs::remove(f, ec);
    }
  }

 private:
  fs::path dir_;
  std::vector<fs::path> files_;
  std::vector<fs::path> kept_;
};

template <typename T>
T read_as(const json& cfg, const char* key) {
  try {
    return cfg.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

void write_resolved(OutputSet& out, const json& cfg) {
  const fs::path p = out.claim("resolved-config.json");
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw IoError("cannot write " + p.string());
  f << cfg.dump(2) << '\n';
}

const std::vector<ChannelRecord>& select_subset(const std::vector<ChannelRecord>& all,
                                                const std::pair<std::vector<ChannelRecord>, std::vector<ChannelRecord>>* split,
                                                const std::string& subset) {
  if (subset == "all") return all;
  if (!split) throw ConfigError("split.subset '" + subset + "' needs at least two records");
  if (subset == "train") return split->first;
  if (subset == "eval") return split->second;
  throw ConfigError("split.subset must be train, eval or all");
}

struct SplitData {
  Dataset dataset;
  std::optional<std::pair<std::vector<ChannelRecord>, std::vector<ChannelRecord>>> split;
};

SplitData load_split(const json& cfg) {
  const auto path = read_as<std::string>(cfg, "dataset");
  if (path.empty()) throw ConfigError("config key 'dataset' is required");
  SplitData d{read_dataset(path), std::nullopt};
  const json& s = cfg.at("split");
  const double fraction = read_as<double>(s, "fraction");
  const std::uint64_t seed = s.at("seed").is_null() ? d.dataset.manifest.split_seed : read_as<std::uint64_t>(s, "seed");
  if (d.dataset.records.size() >= 2) d.split = split_dataset(d.dataset.records, fraction, seed);
  return d;
}

void run_synth(const json& cfg, OutputSet& out) {
  const json& r = cfg.at("room");
  RoomSpec room = preset_room(read_as<std::string>(r, "preset"));
  if (!r.at("dimensions").is_null()) {
    const auto dims = read_as<std::vector<double>>(r, "dimensions");
    if (dims.size() != 3) throw ConfigError("room.dimensions must hold three values");
    room.dimensions = {dims[0], dims[1], dims[2]};
  }
  if (!r.at("reflection_coeff").is_null()) room.reflection_coeff = read_as<double>(r, "reflection_coeff");
  room.max_order = read_as<int>(r, "max_order");
  room.carrier_hz = read_as<double>(r, "carrier_hz");
  room.num_subcarriers = read_as<int>(r, "num_subcarriers");
  room.subcarrier_spacing_hz = read_as<double>(r, "subcarrier_spacing_hz");
  room.validate();

  const json& sc = cfg.at("scene");
  SceneConfig base;
  base.azimuth_bins = read_as<int>(sc, "azimuth_bins");
  base.elevation_bins = read_as<int>(sc, "elevation_bins");
  base.full_sphere = read_as<bool>(sc, "full_sphere");
  base.samples_per_ray = read_as<int>(sc, "samples_per_ray");
  base.max_distance = read_as<double>(sc, "max_distance");
  const SceneConfig scene = scene_for_room(room, base);
  scene.validate();

  const json& p = cfg.at("placement");
  DatasetOptions opts;
  opts.num_tx = read_as<int>(p, "num_tx");
  opts.num_rx = read_as<int>(p, "num_rx");
  opts.margin = read_as<double>(p, "margin");
  opts.min_separation = read_as<double>(p, "min_separation");
  opts.seed = read_as<std::uint64_t>(cfg, "seed");
  if (!cfg.at("noise_db").is_null()) opts.noise_db = read_as<double>(cfg, "noise_db");
  opts.task = task_from_string(read_as<std::string>(cfg, "task"));
  opts.azimuth_bins = scene.azimuth_bins;
  opts.elevation_bins = scene.elevation_bins;
  opts.full_sphere = scene.full_sphere;

  const auto name = read_as<std::string>(cfg, "name");
  if (name.empty() || name.find('/') != std::string::npos) throw ConfigError("name must be a plain file stem");
  DatasetManifest manifest;
  manifest.task = opts.task;
  manifest.scene = scene;
  manifest.split_seed = read_as<std::uint64_t>(cfg, "split_seed");
  const auto records = generate_dataset(room, opts);
  out.claim(name + ".ndrec");
  const fs::path stem = out.claim(name + ".manifest").replace_extension();
  write_dataset(records, manifest, stem);
  std::cout << "wrote " << records.size() << " records to " << stem.string() << ".ndrec\n";
}

void run_train(const json& cfg, OutputSet& out) {
  SplitData data = load_split(cfg);
  if (!data.split) throw DomainError("train: dataset needs at least two records");
  SceneConfig scene = data.dataset.manifest.scene;
  const json& sc = cfg.at("scene");
  if (!sc.at("azimuth_bins").is_null()) scene.azimuth_bins = read_as<int>(sc, "azimuth_bins");
  if (!sc.at("elevation_bins").is_null()) scene.elevation_bins = read_as<int>(sc, "elevation_bins");
  if (!sc.at("full_sphere").is_null()) scene.full_sphere = read_as<bool>(sc, "full_sphere");
  if (!sc.at("samples_per_ray").is_null()) scene.samples_per_ray = read_as<int>(sc, "samples_per_ray");
  if (!sc.at("max_distance").is_null()) scene.max_distance = read_as<double>(sc, "max_distance");
  scene.validate();

  TrainConfig tc = train_config_from_json(cfg.at("train"));
  if (tc.task != data.dataset.manifest.task) {
    throw ConfigError("train.task '" + to_string(tc.task) + "' does not match the dataset task '" +
                      to_string(data.dataset.manifest.task) + "'");
  }
  const std::string subset = read_as<std::string>(cfg.at("split"), "subset");
  if (subset != "eval") throw ConfigError("train: split.subset must be 'eval' (the held-out part)");

  TrainOptions opts;
  opts.checkpoint_base = out.claim("model.ckpt").replace_extension();
  out.claim("model.ckpt.json");
  const fs::path last = out.claim("model-last.ckpt");
  const fs::path last_manifest = out.claim("model-last.ckpt.json");
  if (read_as<bool>(cfg, "resume")) opts.resume_from = fs::path(opts.checkpoint_base.string() + "-last");
  opts.on_eval = [](const MetricPoint& p) {
    std::cout << "epoch " << p.epoch << " step " << p.step << " train_loss " << format_number(p.train_loss)
              << " eval " << format_number(p.eval_metric) << std::endl;
  };
  const fs::path history = out.claim("metrics.csv");
  TrainResult result;
  try {
    result = train(tc, scene, data.split->first, data.split->second, opts);
  } catch (const NumericalError&) {
    out.keep(last);
    out.keep(last_manifest);
    throw;
  }
  write_history_csv(history, result.history);
  std::cout << "best " << to_string(result.metric) << " " << format_number(result.best_metric) << " at epoch "
            << result.best_epoch << '\n';
}

void run_eval(const json& cfg, OutputSet& out, bool dump_predictions) {
  const auto ckpt = read_as<std::string>(cfg, "checkpoint");
  if (ckpt.empty()) throw ConfigError("config key 'checkpoint' is required");
  SplitData data = load_split(cfg);
  const auto& records = select_subset(data.dataset.records, data.split ? &*data.split : nullptr,
                                      read_as<std::string>(cfg.at("split"), "subset"));
  LoadedModel lm = load_model(ckpt);
  const Task task = lm.config.task;
  if (task != data.dataset.manifest.task) throw ConfigError("checkpoint task does not match the dataset task");
  const auto predictions = predict(*lm.model, records, task, lm.target_scale, read_as<int>(cfg, "batch_rays"));

  if (dump_predictions) {
    DatasetManifest manifest;
    manifest.task = task;
    manifest.scene = lm.scene;
    out.claim("predictions.ndrec");
    const fs::path stem = out.claim("predictions.manifest").replace_extension();
    write_dataset(predictions, manifest, stem);
    std::cout << "wrote " << predictions.size() << " predictions to " << stem.string() << ".ndrec\n";
    return;
  }
  const MetricReport report = evaluate(predictions, records, task);
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) loss_sum += loss(predictions[i], records[i], task);
  const fs::path p = out.claim("metrics.csv");
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw IoError("cannot write " + p.string());
  f << "metric,value\n";
  f << to_string(report.name) << ',' << format_number(report.value) << '\n';
  f << "mean_loss," << format_number(loss_sum / static_cast<double>(records.size())) << '\n';
  if (!f) throw IoError("failed writing " + p.string());
  std::cout << to_string(report.name) << ' ' << format_number(report.value) << '\n';
}

void run_plot(const json& cfg, OutputSet& out) {
  SplitData data = load_split(cfg);
  const auto& records = select_subset(data.dataset.records, data.split ? &*data.split : nullptr,
                                      read_as<std::string>(cfg.at("split"), "subset"));
  const int index = read_as<int>(cfg, "record");
  if (index < 0 || static_cast<std::size_t>(index) >= records.size()) {
    throw ConfigError("record index " + std::to_string(index) + " is out of range");
  }
  const ChannelRecord& rec = records[static_cast<std::size_t>(index)];
  const SceneConfig& scene = data.dataset.manifest.scene;
  const auto ckpt = read_as<std::string>(cfg, "checkpoint");
  if (!rec.spectrum && ckpt.empty()) throw ConfigError("record has no spectrum and no checkpoint was given");

  if (rec.spectrum) {
    if (rec.spectrum->rows() != scene.elevation_bins || rec.spectrum->cols() != scene.azimuth_bins) {
      throw ConfigError("record spectrum shape does not match the manifest direction grid");
    }
    write_spectrum_image(out.claim("truth.pgm"), *rec.spectrum);
    write_matrix_csv(out.claim("truth.csv"), *rec.spectrum);
  }
  if (!ckpt.empty()) {
    LoadedModel lm = load_model(ckpt);
    const RenderResult r = render(rec.rx_position, rec.tx_position, DirectionGrid::from_scene(lm.scene), *lm.model);
    write_spectrum_image(out.claim("prediction.pgm"), r.spectrum);
    write_matrix_csv(out.claim("prediction.csv"), r.spectrum);
    if (rec.spectrum && rec.spectrum->rows() == r.spectrum.rows() && rec.spectrum->cols() == r.spectrum.cols()) {
      const Eigen::MatrixXd err = (r.spectrum - *rec.spectrum).cwiseAbs();
      write_spectrum_image(out.claim("abs-error.pgm"), err);
      write_matrix_csv(out.claim("abs-error.csv"), err);
    }
  }
  std::cout << "wrote spectrum plots for record " << index << '\n';
}

}  // namespace

void execute(const std::string& sub, const json& cfg, const fs::path& output_dir) {
  std::error_code ec;
  const bool created = fs::create_directories(output_dir, ec);
  if (ec) throw IoError("cannot create output directory " + output_dir.string() + ": " + ec.message());
  OutputSet out(output_dir);
  try {
    write_resolved(out, cfg);
    if (sub == "synth-gen") {
      run_synth(cfg, out);
    } else if (sub == "train") {
      run_train(cfg, out);
    } else if (sub == "eval") {
      run_eval(cfg, out, false);
    } else if (sub == "predict") {
      run_eval(cfg, out, true);
    } else if (sub == "plot-spectrum") {
      run_plot(cfg, out);
    } else {
      throw ConfigError("unknown subcommand '" + sub + "'");
    }
  } catch (...) {
    out.remove_all();
    if (created) fs::remove(output_dir, ec);  // only succeeds when empty
    throw;
  }
}

// ---------------------------------------------------------------------------

namespace {

int report(const char* cls, const std::string& message, int code) {
  std::string line = message;
  std::replace(line.begin(), line.end(), '\n', ' ');
  std::cerr << "error: " << cls << ": " << line << std::endl;
  return code;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Radiance-field wireless channel prediction: dataset synthesis, training and evaluation."};
  app.require_subcommand(1);
  struct Slot {
    CLI::App* app = nullptr;
    std::string config;
    std::string output = "out";
    std::vector<std::string> overrides;
  };
  const auto names = subcommands();
  std::vector<Slot> slots(names.size());
  const char* blurbs[] = {"generate a synthetic dataset from an image-source room model",
                          "train a field model on a dataset split", "evaluate a checkpoint on a dataset",
                          "dump per-record predictions of a checkpoint",
                          "export ground-truth and predicted spectra as PGM images and CSV matrices"};
  for (std::size_t i = 0; i < names.size(); ++i) {
    Slot& s = slots[i];
    s.app = app.add_subcommand(names[i], blurbs[i]);
    s.app->add_option("-c,--config", s.config, "JSON config file");
    s.app->add_option("-o,--output", s.output, "output directory")->capture_default_str();
    s.app->add_option("overrides", s.overrides, "key=value overrides applied after the config file");
    s.app->footer("Config keys (key = default):\n" + describe_keys(names[i]));
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return report("config", e.what(), kConfigError);
  }

  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!slots[i].app->parsed()) continue;
    try {
      const json cfg = resolve_config(names[i], slots[i].config, slots[i].overrides);
      execute(names[i], cfg, slots[i].output);
      return kOk;
    } catch (const ConfigError& e) {
      return report("config", e.what(), kConfigError);
    } catch (const nlohmann::json::exception& e) {
      return report("config", e.what(), kConfigError);
    } catch (const IoError& e) {
      return report("io", e.what(), kIoError);
    } catch (const fs::filesystem_error& e) {
      return report("io", e.what(), kIoError);
    } catch (const NumericalError& e) {
      return report("numerical", e.what(), kRuntimeError);
    } catch (const DomainError& e) {
      return report("domain", e.what(), kRuntimeError);
    } catch (const std::exception& e) {
      return report("runtime", e.what(), kRuntimeError);
    }
  }
  return kOk;
}

}  // namespace nerfapt::cli
