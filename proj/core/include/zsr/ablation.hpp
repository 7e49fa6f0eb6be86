#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "zsr/gzsl_gate.hpp"
#include "zsr/metrics.hpp"
#include "zsr/refinement.hpp"
#include "zsr/train.hpp"

namespace zsr {

// In-memory inputs for an experiment: anchors plus the three sample streams.
struct ExperimentData {
  SemanticAnchorSet anchors;
  ClassSplit split;
  std::vector<VisualFeatureMap> train;  // seen classes
  std::vector<VisualFeatureMap> val;    // delta calibration (seen + unseen)
  std::vector<VisualFeatureMap> test;   // stream order; ZSL uses its unseen part
};

struct AblationConfig {
  TrainConfig train;
  StreamConfig stream;
  GateConfig gate;
  bool calibrate = true;   // calibrate delta on `val` per partition mode
  bool timing = false;     // fill runtime_ms (makes the CSV nondeterministic)
  std::string fingerprint;  // extra text hashed into every config_id
};

struct AblationRow {
  std::string config_id;
  PartitionMode mode = PartitionMode::kAdaptive;
  TtaMode tta = TtaMode::kOff;
  Protocol protocol = Protocol::kZsl;
  MetricsReport report;
  double delta = 0.0;  // GZSL rows
  std::uint64_t seed = 0;
  std::optional<double> runtime_ms;
};

// Samples whose class is unseen, in order.
std::vector<VisualFeatureMap> unseen_only(const std::vector<VisualFeatureMap>& samples,
                                          const ClassSplit& split);

// Report for one finished stream.
MetricsReport stream_report(const StreamResult& result, const ClassSplit& split,
                            Protocol protocol);

// {global, static, adaptive} x {off, nobank, full} x {zsl, gzsl}, 18 rows.
std::vector<AblationRow> run_ablation_suite(const ExperimentData& data, const AblationConfig& cfg);

// config_id,partition_mode,tta_mode,protocol,top1,S,U,H,seed,runtime_ms
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace zsr
