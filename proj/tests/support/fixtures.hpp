#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "zsr/alignment.hpp"
#include "zsr/anchors.hpp"
#include "zsr/dataset.hpp"
#include "zsr/random.hpp"

namespace zsr::testing {

// A small random problem: anchors, split, params and feature maps.
struct Instance {
  SemanticAnchorSet anchors;
  ClassSplit split;
  AlignmentParams params;
  std::vector<VisualFeatureMap> seen_samples;
  std::vector<VisualFeatureMap> unseen_samples;
};

struct InstanceShape {
  std::size_t d = 6;
  std::size_t n = 5;
  std::size_t nodes = 8;
  std::size_t h = 4;
  std::size_t mlp = 7;
  std::size_t classes = 5;
  std::size_t unseen = 2;
  std::size_t body_parts = 1;
  std::size_t segments = 1;
  std::size_t samples_per_class = 2;
  PartitionMode mode = PartitionMode::kAdaptive;
};

// Random shape within the acceptance bounds (d, n <= 8, S <= 10, C <= 5).
InstanceShape random_shape(Rng& rng);

Instance make_instance(const InstanceShape& shape, std::uint64_t seed);

// Random unit-norm anchor set.
SemanticAnchorSet random_anchors(std::size_t classes, std::size_t body_parts, std::size_t segments,
                                 std::size_t d, Rng& rng, ClassId first_id = 0);

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0);

// Smallest |pre-activation| of the projection head over every sample and
// query block. Central differences with a larger step straddle a ReLU kink.
double relu_margin(const std::vector<VisualFeatureMap>& samples, const std::vector<Matrix>& queries,
                   const AlignmentParams& params);

// Queries seen by training (one block per class) and by adaptation (the
// global rows of `classes`, averaged).
std::vector<Matrix> class_queries(const SemanticAnchorSet& anchors);
Matrix mean_global_query(const SemanticAnchorSet& anchors, std::span<const ClassId> classes);

// Writes anchors.dpt, features/*.dpt and manifest.json under `dir`; the
// first `seen` classes are seen. Returns the manifest path.
struct TinyDataset {
  std::size_t classes = 3;
  std::size_t seen = 2;
  std::size_t body_parts = 4;
  std::size_t segments = 3;
  std::size_t d = 16;
  std::size_t nodes = 6;
  std::size_t n = 4;
  std::size_t samples_per_class = 2;
  std::uint64_t seed = 1;
};
std::filesystem::path write_tiny_dataset(const std::filesystem::path& dir, const TinyDataset& spec);
DatasetManifest tiny_manifest(const std::filesystem::path& dir, const TinyDataset& spec);

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, const std::string& text);

// Relative paths of all regular files below `root`, sorted.
std::vector<std::string> list_files(const std::filesystem::path& root);

}  // namespace zsr::testing
