#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "zsr/linalg.hpp"
#include "zsr/tensor.hpp"

namespace zsr {

using ClassId = int;

// Disjoint seen/unseen partition of the class set.
class ClassSplit {
 public:
  ClassSplit() = default;
  // Throws on overlap or an empty seen set.
  ClassSplit(std::set<ClassId> seen, std::set<ClassId> unseen);

  const std::set<ClassId>& seen() const { return seen_; }
  const std::set<ClassId>& unseen() const { return unseen_; }
  bool is_seen(ClassId c) const { return seen_.contains(c); }
  bool is_unseen(ClassId c) const { return unseen_.contains(c); }
  bool contains(ClassId c) const { return is_seen(c) || is_unseen(c); }

  std::vector<ClassId> seen_list() const { return {seen_.begin(), seen_.end()}; }
  std::vector<ClassId> unseen_list() const { return {unseen_.begin(), unseen_.end()}; }
  // Ascending union.
  std::vector<ClassId> all_list() const;

 private:
  std::set<ClassId> seen_;
  std::set<ClassId> unseen_;
};

struct ClassRecord {
  ClassId id = 0;
  std::string name;
  std::vector<std::string> descriptions;  // one per granularity
};

struct SampleRecord {
  std::string id;
  ClassId class_id = 0;
  std::filesystem::path features;  // resolved against the manifest directory
};

struct DatasetDims {
  std::size_t classes = 0;        // C
  std::size_t granularities = 0;  // Gr
  std::size_t anchor_dim = 0;     // d
  std::size_t nodes = 0;          // S
  std::size_t feature_dim = 0;    // n

  friend bool operator==(const DatasetDims&, const DatasetDims&) = default;
};

// Granularity labels follow "global", "bp_1".."bp_P", "ti_1".."ti_Z".
struct GranularityLayout {
  std::size_t body_parts = 0;        // P
  std::size_t temporal_segments = 0; // Z
  std::size_t count() const { return 1 + body_parts + temporal_segments; }
};

GranularityLayout parse_granularity_labels(const std::vector<std::string>& labels);
std::vector<std::string> make_granularity_labels(std::size_t body_parts,
                                                 std::size_t temporal_segments);

struct DatasetManifest {
  std::vector<ClassRecord> classes;
  ClassSplit split;
  std::vector<std::string> granularity_labels;
  std::filesystem::path anchors;
  std::vector<SampleRecord> samples;
  DatasetDims dims;

  GranularityLayout layout() const { return parse_granularity_labels(granularity_labels); }
  std::vector<ClassId> class_ids() const;
};

// Parses manifest JSON text. Relative paths are resolved against `base_dir`.
DatasetManifest parse_manifest(const std::string& json_text,
                               const std::filesystem::path& base_dir);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Writes a manifest as JSON; paths are written relative to the manifest's
// directory when they lie beneath it.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// One sample's spatio-temporal node features (S x n).
struct VisualFeatureMap {
  Matrix values;
  std::string sample_id;
  ClassId class_id = 0;
};

class ValidatedDataset {
 public:
  const DatasetManifest& manifest() const { return manifest_; }
  const Tensor& raw_anchors() const { return anchors_; }

  std::size_t sample_count() const { return manifest_.samples.size(); }
  VisualFeatureMap load_sample(std::size_t index) const;
  std::vector<VisualFeatureMap> load_samples(const std::vector<std::size_t>& indices) const;
  // Indices of samples whose class satisfies `pred`, in manifest order.
  template <typename Pred>
  std::vector<std::size_t> select(Pred pred) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < manifest_.samples.size(); ++i) {
      if (pred(manifest_.samples[i].class_id)) out.push_back(i);
    }
    return out;
  }

 private:
  friend ValidatedDataset validate_dataset(DatasetManifest manifest);
  ValidatedDataset(DatasetManifest manifest, Tensor anchors)
      : manifest_(std::move(manifest)), anchors_(std::move(anchors)) {}

  DatasetManifest manifest_;
  Tensor anchors_;
};

// Loads the anchor tensor and checks every feature file header against the
// manifest dims. Feature payloads are loaded on demand.
ValidatedDataset validate_dataset(DatasetManifest manifest);

}  // namespace zsr
