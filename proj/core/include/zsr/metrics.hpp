#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "zsr/dataset.hpp"

namespace zsr {

// Fraction of exact matches. Throws on empty input or length mismatch.
double top1_accuracy(std::span<const ClassId> preds, std::span<const ClassId> labels);

// 2SU/(S+U), or 0 when S+U = 0.
double harmonic_mean(double seen, double unseen);

// Seen/unseen accuracies; a component is absent when no sample of that domain
// is present, and H only exists when both are.
struct GzslScores {
  std::optional<double> seen;
  std::optional<double> unseen;
  std::optional<double> harmonic;

  // Throws when H is undefined.
  double require_harmonic() const;
};

GzslScores gzsl_metrics(std::span<const ClassId> preds, std::span<const ClassId> labels,
                        const ClassSplit& split);

// Counts indexed [true][pred] over `classes` (ascending order as given).
struct ConfusionMatrix {
  std::vector<ClassId> classes;
  std::vector<std::vector<std::size_t>> counts;

  std::size_t index(ClassId c) const;
  std::size_t row_sum(std::size_t r) const;
  std::size_t trace() const;
};

ConfusionMatrix confusion_matrix(std::span<const ClassId> preds, std::span<const ClassId> labels,
                                 std::span<const ClassId> class_order);

struct MetricsReport {
  double top1 = 0.0;
  GzslScores gzsl;  // empty for single-domain streams
  std::map<ClassId, double> per_class_acc;
  ConfusionMatrix confusion;
  std::size_t n_samples = 0;

  // Minimum over classes that have samples.
  double min_class_accuracy() const;
};

// Builds the full report; per-class entries cover classes present in `labels`.
MetricsReport make_report(std::span<const ClassId> preds, std::span<const ClassId> labels,
                          const ClassSplit& split, std::span<const ClassId> class_order);

// Per-class (after - before), sorted descending, ties by class id.
std::vector<std::pair<ClassId, double>> classwise_delta(const MetricsReport& before,
                                                        const MetricsReport& after);

// Four decimal places, ties to even.
std::string format_accuracy(double value);

}  // namespace zsr
