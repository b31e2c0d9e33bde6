// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace nerfapt::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kRuntimeError = 3, kIoError = 4 };

/// Subcommands and their default configuration trees.
std::vector<std::string> subcommands();
nlohmann::json default_config(const std::string& subcommand);

/// Defaults ← config file ← `key=value` overrides (dotted keys address nested
/// objects; values parse as JSON, falling back to a plain string). Unknown
/// keys throw ConfigError.
nlohmann::json resolve_config(const std::string& subcommand, const std::filesystem::path& config_path,
                              const std::vector<std::string>& overrides);

/// One line per leaf key: `key = default`.
std::string describe_keys(const std::string& subcommand);

/// Executes a subcommand with an already resolved configuration, writing
/// artifacts below `output_dir`. Throws the library error types.
void execute(const std::string& subcommand, const nlohmann::json& config, const std::filesystem::path& output_dir);

/// Full command-line entry point; returns the process exit status.
int run(int argc, char** argv);

}  // namespace nerfapt::cli
