// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#include "cli.hpp"

int main(int argc, char** argv) { return attnkit::cli::run_command(argc, argv); }
