// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "nerfapt/cli.hpp"
#include "nerfapt/dataio.hpp"
#include "nerfapt/errors.hpp"

using nerfapt::ConfigError;
namespace cli = nerfapt::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "nerfapt-test-cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome invoke(const std::string& args, const fs::path& logs) {
  const fs::path out = logs / "stdout.txt";
  const fs::path err = logs / "stderr.txt";
  const std::string cmd = std::string("\"") + NERFAPT_CLI_PATH + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                          err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.out = slurp(out);
  o.err = slurp(err);
  return o;
}

const char* kTinyTrain =
    "scene.azimuth_bins=4 scene.elevation_bins=2 scene.samples_per_ray=8 train.depth=1 train.base_channels=8 "
    "train.spp_levels=[2,1] train.feature_dim=4 train.position_frequencies=3 train.direction_frequencies=2 "
    "train.batch_rays=32 train.epochs=2";

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("config resolution layers defaults, file and overrides") {
    const fs::path dir = scratch("resolve");
    {
      std::ofstream f(dir / "c.json");
      f << R"({"placement": {"num_tx": 7}, "room": {"preset": "office"}})";
    }
    const auto cfg = cli::resolve_config("synth-gen", dir / "c.json", {"placement.num_rx=3", "noise_db=25", "name=abc"});
    CHECK(cfg["placement"]["num_tx"] == 7);
    CHECK(cfg["placement"]["num_rx"] == 3);
    CHECK(cfg["room"]["preset"] == "office");
    CHECK(cfg["noise_db"] == 25);
    CHECK(cfg["name"] == "abc");
    CHECK(cfg["seed"] == 1);

    CHECK_THROWS_AS(cli::resolve_config("synth-gen", "", {"placement.nmu_tx=3"}), ConfigError);
    CHECK_THROWS_AS(cli::resolve_config("synth-gen", "", {"placement=3"}), ConfigError);
    CHECK_THROWS_AS(cli::resolve_config("synth-gen", "", {"novalue"}), ConfigError);
    CHECK_THROWS_AS(cli::resolve_config("bake", "", {}), ConfigError);
    {
      std::ofstream f(dir / "bad.json");
      f << R"({"room": {"colour": "red"}})";
    }
    CHECK_THROWS_AS(cli::resolve_config("synth-gen", dir / "bad.json", {}), ConfigError);
  }

  TEST_CASE("key listing covers nested sections") {
    const std::string keys = cli::describe_keys("train");
    CHECK(keys.find("train.learning_rate = 0.0005") != std::string::npos);
    CHECK(keys.find("split.fraction = 0.8") != std::string::npos);
    CHECK(cli::describe_keys("synth-gen").find("placement.num_tx = 100") != std::string::npos);
  }

  TEST_CASE("help lists every config key") {
    const fs::path dir = scratch("help");
    const Outcome o = invoke("train --help", dir);
    CHECK(o.code == 0);
    CHECK(o.out.find("train.batch_rays") != std::string::npos);
    CHECK(o.out.find("scene.samples_per_ray") != std::string::npos);
  }

  TEST_CASE("end-to-end runs reproduce byte for byte") {
    const fs::path dir = scratch("e2e");
    const std::string gen = "synth-gen name=ds placement.num_tx=12 placement.num_rx=1 room.num_subcarriers=2 "
                            "scene.azimuth_bins=4 scene.elevation_bins=2 scene.samples_per_ray=8 seed=4";
    for (const char* run : {"a", "b"}) {
      const Outcome o = invoke(gen + " -o " + (dir / run).string(), dir);
      REQUIRE(o.code == 0);
    }
    for (const char* f : {"ds.ndrec", "ds.manifest", "resolved-config.json"}) {
      CAPTURE(f);
      CHECK(fs::exists(dir / "a" / f));
      CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    }
    const auto data = nerfapt::read_dataset(dir / "a" / "ds");
    CHECK(data.records.size() == 12);

    const std::string ds = (dir / "a" / "ds").string();
    for (const char* run : {"ta", "tb"}) {
      const Outcome o = invoke("train dataset=" + ds + " " + kTinyTrain + " -o " + (dir / run).string(), dir);
      REQUIRE(o.code == 0);
      CHECK(o.out.find("epoch 2") != std::string::npos);
    }
    for (const char* f : {"metrics.csv", "model.ckpt", "model.ckpt.json", "model-last.ckpt"}) {
      CAPTURE(f);
      CHECK(slurp(dir / "ta" / f) == slurp(dir / "tb" / f));
    }
    CHECK(slurp(dir / "ta" / "metrics.csv").rfind("step,train_loss,eval_metric\n", 0) == 0);

    const std::string ckpt = (dir / "ta" / "model").string();
    for (const char* run : {"ea", "eb"}) {
      const Outcome o = invoke("eval dataset=" + ds + " checkpoint=" + ckpt + " -o " + (dir / run).string(), dir);
      REQUIRE(o.code == 0);
    }
    const std::string metrics = slurp(dir / "ea" / "metrics.csv");
    CHECK(metrics.rfind("metric,value\nsnr_db,", 0) == 0);
    CHECK(metrics.find("mean_loss,") != std::string::npos);
    CHECK(metrics == slurp(dir / "eb" / "metrics.csv"));

    const Outcome p = invoke("predict dataset=" + ds + " checkpoint=" + ckpt + " split.subset=all -o " +
                                 (dir / "pred").string(),
                             dir);
    REQUIRE(p.code == 0);
    CHECK(nerfapt::read_dataset(dir / "pred" / "predictions").records.size() == 12);

    const Outcome r = invoke("train dataset=" + ds + " " + kTinyTrain + " train.epochs=3 resume=true -o " +
                                 (dir / "ta").string(),
                             dir);
    CHECK(r.code == 2);  // epochs differ from the checkpointed config
  }

  TEST_CASE("spectrum plots match the direction grid") {
    const fs::path dir = scratch("plot");
    REQUIRE(invoke("synth-gen name=sp task=spectrum placement.num_tx=6 placement.num_rx=1 scene.azimuth_bins=6 "
                   "scene.elevation_bins=3 scene.samples_per_ray=8 -o " +
                       (dir / "d").string(),
                   dir)
                .code == 0);
    const std::string ds = (dir / "d" / "sp").string();
    REQUIRE(invoke("train dataset=" + ds + " train.task=spectrum " + kTinyTrain + " scene.azimuth_bins=6 "
                   "scene.elevation_bins=3 -o " + (dir / "t").string(),
                   dir)
                .code == 0);
    const Outcome o = invoke("plot-spectrum dataset=" + ds + " checkpoint=" + (dir / "t" / "model").string() +
                                 " record=2 -o " + (dir / "p").string(),
                             dir);
    REQUIRE(o.code == 0);
    for (const char* f : {"truth.pgm", "prediction.pgm", "abs-error.pgm"}) {
      CAPTURE(f);
      const auto img = nerfapt::read_spectrum_image(dir / "p" / f);
      CHECK(img.width == 6);
      CHECK(img.height == 3);
    }
    CHECK(fs::exists(dir / "p" / "truth.csv"));
    CHECK(invoke("plot-spectrum dataset=" + ds + " record=99 -o " + (dir / "q").string(), dir).code == 2);
  }

  TEST_CASE("exit codes and cleanup on failure") {
    const fs::path dir = scratch("errors");
    Outcome o = invoke("synth-gen placement.bogus=1 -o " + (dir / "x").string(), dir);
    CHECK(o.code == 2);
    CHECK(o.err.rfind("error: config:", 0) == 0);
    CHECK_FALSE(fs::exists(dir / "x"));

    o = invoke("train dataset=" + (dir / "nowhere").string() + " -o " + (dir / "y").string(), dir);
    CHECK(o.code == 4);
    CHECK(o.err.rfind("error: io:", 0) == 0);
    CHECK_FALSE(fs::exists(dir / "y" / "resolved-config.json"));

    fs::create_directories(dir / "z");
    {
      std::ofstream keep(dir / "z" / "unrelated.txt");
      keep << "x";
    }
    o = invoke("synth-gen placement.margin=5 -o " + (dir / "z").string(), dir);
    CHECK(o.code == 2);
    CHECK(fs::exists(dir / "z" / "unrelated.txt"));
    CHECK_FALSE(fs::exists(dir / "z" / "resolved-config.json"));

    CHECK(invoke("frobnicate", dir).code == 2);
    CHECK(invoke("", dir).code == 2);
  }
}
