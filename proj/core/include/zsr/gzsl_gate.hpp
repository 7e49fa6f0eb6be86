#pragma once

#include <span>
#include <string>
#include <vector>

#include "zsr/alignment.hpp"
#include "zsr/anchors.hpp"
#include "zsr/refinement.hpp"

namespace zsr {

// Shannon entropy (natural log, 0 log 0 = 0). Input must be a simplex within
// 1e-6.
double entropy(std::span<const double> probs);
double entropy(const RowVector& probs);

struct GateConfig {
  double delta = 1.0;
  // Explicit candidate thresholds. When empty, `quantiles` evenly spaced
  // quantiles of the validation entropies between q_low and q_high are used,
  // or with quantiles == 0 every distinct routing of the validation set.
  std::vector<double> grid;
  std::size_t quantiles = 0;
  double q_low = 0.01;
  double q_high = 0.99;
};

// Everything calibration needs from one validation sample, so the grid search
// never re-runs the model.
struct GateSample {
  ClassId true_class = 0;
  double entropy = 0.0;     // over the full candidate set
  ClassId seen_pred = 0;    // restricted argmax among seen classes
  ClassId unseen_pred = 0;  // restricted argmax among unseen classes
};

struct CalibrationRow {
  double delta = 0.0;
  double seen_acc = 0.0;
  double unseen_acc = 0.0;
  double harmonic = 0.0;
  double triage_acc = 0.0;
};

struct Calibration {
  double delta = 0.0;
  std::vector<CalibrationRow> table;  // in grid order
};

// Type-7 (linear interpolation) quantiles at `count` evenly spaced levels.
std::vector<double> quantile_grid(std::vector<double> values, std::size_t count, double q_low,
                                  double q_high);

// 0, the midpoints between consecutive distinct values, and the next double
// above the largest value.
std::vector<double> midpoint_grid(std::vector<double> values);

// Argmax of H over the grid, ties to the smallest delta. Throws on an empty or
// single-domain stream.
Calibration calibrate_delta(std::span<const GateSample> samples, const ClassSplit& split,
                            const GateConfig& cfg);

// Runs the model once per sample with the given anchors.
std::vector<GateSample> gate_samples(std::span<const VisualFeatureMap> stream,
                                     const SemanticAnchorSet& anchors,
                                     const AlignmentParams& params, const ClassSplit& split);

Calibration calibrate_delta(std::span<const VisualFeatureMap> stream,
                            const SemanticAnchorSet& anchors, const AlignmentParams& params,
                            const ClassSplit& split, const GateConfig& cfg);

// delta,S,U,H,triage rows.
std::string calibration_csv(const Calibration& cal);

struct GatedPrediction {
  Prediction prediction;  // restricted distribution over the routed set
  Route route = Route::kSeen;
  double full_entropy = 0.0;
};

// Full-set softmax, then H < delta routes to the seen set, else unseen, and
// the sample is re-classified within that set.
GatedPrediction triage_and_classify(const VisualFeatureMap& features,
                                    const SemanticAnchorSet& refined,
                                    const AlignmentParams& params, const ClassSplit& split,
                                    double delta);

// Same decision on precomputed full-set logits (ascending class order of
// split.all_list()).
GatedPrediction triage_logits(const RowVector& full_logits, const ClassSplit& split, double delta);

}  // namespace zsr
