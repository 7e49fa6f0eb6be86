#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "zsr/dataset.hpp"
#include "zsr/linalg.hpp"

namespace zsr {

// Wraps a class description in the visual-language prompt template
// ("a video of <description>") after trimming surrounding whitespace.
std::string build_prompt(std::string_view description);

// Per-class, per-granularity unit-norm text embeddings (C x Gr x d). Row
// (class_index * Gr + granularity) of `values()` holds one anchor.
class SemanticAnchorSet {
 public:
  // `values` must already satisfy the unit-norm invariant (within 1e-5).
  SemanticAnchorSet(Matrix values, std::vector<ClassId> class_ids,
                    std::vector<std::string> granularity_labels);

  const Matrix& values() const { return values_; }
  const std::vector<ClassId>& class_ids() const { return class_ids_; }
  const std::vector<std::string>& granularity_labels() const { return labels_; }

  std::size_t class_count() const { return class_ids_.size(); }
  std::size_t granularity_count() const { return labels_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(values_.cols()); }

  std::size_t class_index(ClassId id) const;
  bool has_class(ClassId id) const { return index_.contains(id); }
  std::size_t granularity_index(std::string_view label) const;

  std::size_t row(std::size_t class_index, std::size_t granularity) const {
    return class_index * labels_.size() + granularity;
  }
  auto anchor(std::size_t class_index, std::size_t granularity) const {
    return values_.row(static_cast<Eigen::Index>(row(class_index, granularity)));
  }
  // Gr x d block for one class.
  auto class_block(std::size_t class_index) const {
    return values_.middleRows(static_cast<Eigen::Index>(class_index * labels_.size()),
                              static_cast<Eigen::Index>(labels_.size()));
  }

  // Same classes with only the global row kept (Gr = 1).
  SemanticAnchorSet global_only() const;

  Tensor to_tensor() const;

 private:
  Matrix values_;
  std::vector<ClassId> class_ids_;
  std::vector<std::string> labels_;
  std::unordered_map<ClassId, std::size_t> index_;
};

// L2-normalizes every d-vector of `raw` (C x Gr x d, checked against the
// manifest). A zero-norm row is an error naming its class and granularity.
SemanticAnchorSet assemble_anchor_set(const Tensor& raw, const DatasetManifest& manifest);

// C x d slice for one granularity label.
Tensor granularity_view(const SemanticAnchorSet& anchors, std::string_view label);

}  // namespace zsr
