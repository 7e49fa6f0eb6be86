#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "zsr/alignment.hpp"
#include "zsr/anchors.hpp"
#include "zsr/dataset.hpp"

namespace zsr {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 256;  // clamped to the training set size
  std::size_t max_epochs = 300;
  std::size_t patience = 20;
  double validation_fraction = 0.1;
  double temperature = 0.07;
  std::size_t hidden = 150;
  std::size_t mlp_hidden = 512;
  PartitionMode mode = PartitionMode::kAdaptive;
  StaticPartition partition = StaticPartition::ntu25();
  std::uint64_t seed = 0;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double validation_accuracy = 0.0;
};

struct TrainResult {
  AlignmentParams params;  // best-validation parameters
  double best_validation_accuracy = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::vector<EpochStats> history;
};

// Anchor set as the given mode consumes it: global mode keeps only the
// global row.
SemanticAnchorSet anchors_for_mode(const SemanticAnchorSet& anchors, PartitionMode mode);

// Top-1 over `samples` predicting among `candidates` with unrefined anchors.
double evaluate_accuracy(std::span<const VisualFeatureMap> samples,
                         const SemanticAnchorSet& anchors, const AlignmentParams& params,
                         std::span<const ClassId> candidates);

// Adam on the batch-mean training loss over seen-class samples, early
// stopping on held-out seen-class top-1. Deterministic given cfg.seed.
TrainResult train(std::span<const VisualFeatureMap> samples, const SemanticAnchorSet& anchors,
                  const ClassSplit& split, const TrainConfig& cfg);
// Trains on the dataset's seen-class samples.
TrainResult train(const ValidatedDataset& dataset, const TrainConfig& cfg);

// Parameters as DPT1 tensors plus params.json in `dir`.
void save_params(const AlignmentParams& params, const std::filesystem::path& dir);
AlignmentParams load_params(const std::filesystem::path& dir);

}  // namespace zsr
