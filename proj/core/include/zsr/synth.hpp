#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "zsr/anchors.hpp"
#include "zsr/dataset.hpp"

namespace zsr {

// Synthetic benchmark. Class anchors live in a low-dimensional latent span;
// every node of a feature map is a fixed linear map of its class's
// granularity anchors plus noise, so an alignment trained on seen classes
// transfers to unseen ones. Unseen-class evaluation features are rotated in a
// seeded 2-plane to open a train/test gap.
struct SynthConfig {
  std::string name = "custom";
  std::size_t classes = 20;         // C
  std::size_t unseen_classes = 5;   // C_unseen
  std::size_t anchor_dim = 32;      // d
  std::size_t feature_dim = 32;     // n
  std::size_t latent_dim = 8;       // span of the class directions
  std::size_t frames = 3;           // L', nodes = frames * 25 joints
  std::size_t body_parts = 4;       // P, ntu25 partition
  std::size_t temporal_segments = 3;  // Z

  std::size_t train_per_class = 40;  // seen classes only
  std::size_t val_per_class = 10;    // seen and unseen
  std::size_t test_per_class = 40;   // unseen classes
  std::size_t seen_test_per_class = 10;
  double imbalance = 1.0;  // ratio of largest to smallest unseen test count

  double anchor_separation = 1.0;   // weight of the class direction against the shared one
  double min_angle = 0.6;           // radians between class directions
  double granularity_spread = 0.5;  // per-granularity deviation from the class direction
  double sample_spread = 0.35;      // per-sample latent jitter
  double feature_noise = 0.3;       // per-node Gaussian noise
  double shift_angle = 0.0;         // radians, unseen evaluation features
  double unseen_spread_scale = 1.0;  // extra jitter multiplier for unseen samples
  std::uint64_t seed = 0;

  std::size_t nodes() const { return frames * 25; }
  std::size_t granularities() const { return 1 + body_parts + temporal_segments; }
  // Throws on invalid counts or geometry.
  void validate() const;
};

struct SynthData {
  SynthConfig config;
  Matrix anchors;  // (C*Gr) x d, unit rows
  std::vector<ClassId> class_ids;
  std::vector<std::string> granularity_labels;
  ClassSplit split;
  std::vector<VisualFeatureMap> train;  // seen classes
  std::vector<VisualFeatureMap> val;    // seen + unseen, shuffled
  std::vector<VisualFeatureMap> test;   // seen + unseen, shuffled

  SemanticAnchorSet anchor_set() const;
  // Unseen-class samples of `test` in stream order.
  std::vector<VisualFeatureMap> unseen_test() const;
};

// Generates everything in memory. Values are rounded to float32 so they match
// the files written by synth_generate bit for bit.
SynthData synth_build(const SynthConfig& cfg);

struct SynthPaths {
  std::filesystem::path train;  // manifests
  std::filesystem::path val;
  std::filesystem::path test;
};

// Writes anchors.dpt, features/*.dpt and train/val/test manifests under `dir`.
SynthPaths synth_generate(const SynthConfig& cfg, const std::filesystem::path& dir);

// Named configurations: "easy", "shifted", "imbalanced", "gzsl".
std::vector<SynthConfig> synth_presets();
SynthConfig synth_preset(std::string_view name);

}  // namespace zsr
