#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "zsr/gzsl_gate.hpp"
#include "zsr/refinement.hpp"
#include "zsr/synth.hpp"
#include "zsr/train.hpp"

namespace zsr::cli {

// Thrown for malformed configs and bad flag values (exit code 2).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataPaths {
  std::filesystem::path train;   // manifests
  std::filesystem::path val;
  std::filesystem::path test;
  std::filesystem::path params;  // parameter directory
};

struct RunConfig {
  std::uint64_t seed = 0;
  DataPaths paths;
  TrainConfig train;
  StreamConfig stream;
  GateConfig gate;
  bool calibrate = true;  // calibrate delta on paths.val for GZSL runs
  std::string synth_preset = "shifted";
  SynthConfig synth = synth_preset_or_default("shifted");

  static SynthConfig synth_preset_or_default(const std::string& name);
};

// Parses a JSON config; relative paths resolve against `base_dir`. Unknown
// keys are rejected.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

// Everything that influences results, for embedding in reports. Output
// locations are left out so reports do not depend on where they are written.
nlohmann::json effective_config(const RunConfig& cfg);

// Config for a synthetic tree: paths relative to the tree, settings sized
// for the synthetic scale.
nlohmann::json synthetic_run_config(std::uint64_t seed);

}  // namespace zsr::cli
