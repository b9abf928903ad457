// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.h"

int main(int argc, char** argv) { return prefix_forest::cli::run(argc, argv); }
