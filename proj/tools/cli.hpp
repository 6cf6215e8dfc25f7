// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "attnkit/config.hpp"
#include "attnkit/cost_model.hpp"

namespace attnkit::cli {

/// Exit codes of run_command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Settings shared by every subcommand. JSON config files use the same
/// field names; command-line flags override file values.
struct RunConfig {
  std::string variant;
  /// Explicit AttnConfig fields ("h", "d", "d_h", "d_hR", "d_c", "d_cq",
  /// "g", "beta_q", "beta_kv").
  std::map<std::string, std::size_t> dims;
  std::optional<bool> scaling_enabled;
  std::optional<bool> gated;
  std::uint64_t seed = 0;
  /// 0 selects the subcommand default.
  std::size_t trials = 0;
  std::vector<std::size_t> tp;
  HardwareModel hardware;
  std::int64_t context_tokens = 131072;
  std::size_t steps = 2;
  double sigma_w = 0.02;
  std::string context = "kimi";
  std::string format;
  std::string out;
};

/// Reads a JSON config file. Throws ConfigError on unknown keys or bad types.
RunConfig load_run_config(const std::string& path);

/// `base` with every field of `rc` that names a dimension applied on top.
/// Latent variants get d_c = 4 d_h and d_hR = d_h / 2 where still unset.
AttnConfig resolve_config(const RunConfig& rc, AttnConfig base);

/// Runs one subcommand. args excludes the program name.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_command(int argc, char** argv);

}  // namespace attnkit::cli
