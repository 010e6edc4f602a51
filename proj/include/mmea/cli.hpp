#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mmea/config.hpp"
#include "mmea/kgdata.hpp"
#include "mmea/trainer.hpp"

namespace mmea {

struct CliOptions {
  std::filesystem::path config;
  std::filesystem::path out;
  std::filesystem::path checkpoint;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> disable;
  bool unsupervised = false;
  std::vector<std::size_t> pivots;
  std::optional<double> pivot_threshold;
  std::optional<std::size_t> csls_k;
  bool no_csls = false;
  bool no_il = false;
  /// extra key=value overrides applied on top of the config file
  std::vector<std::string> overrides;
};

/// Reads --config (if any) and applies the overrides.
KeyValueConfig resolve_config(const CliOptions& opts);

/// The task a config refers to: either via a `task = manifest` key or the config
/// itself acting as the manifest.
AlignmentTask task_from_config(const KeyValueConfig& cfg);

/// TrainConfig from the config keys, then the command-line flags on top.
TrainConfig train_config_from(const KeyValueConfig& cfg, const CliOptions& opts);

int cmd_train(const CliOptions& opts, std::ostream& log);
int cmd_induce_pivots(const CliOptions& opts, std::ostream& log);
int cmd_evaluate(const CliOptions& opts, std::ostream& log);
int cmd_ablate(const CliOptions& opts, std::ostream& log);
int cmd_synth(const CliOptions& opts, std::ostream& log);

/// Parses argv and dispatches. Returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace mmea
