// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "nerfapt/cli.hpp"

int main(int argc, char** argv) { return nerfapt::cli::run(argc, argv); }
