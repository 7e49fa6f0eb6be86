#include "zsr/anchors.hpp"

#include <cctype>
#include <cmath>

#include "zsr/error.hpp"

namespace zsr {
namespace {

constexpr double kUnitTolerance = 1e-5;

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::string build_prompt(std::string_view description) {
  std::size_t begin = 0;
  std::size_t end = description.size();
  while (begin < end && is_space(description[begin])) ++begin;
  while (end > begin && is_space(description[end - 1])) --end;
  if (begin == end) fail(ErrorKind::kInvalidArgument, "empty description");
  return "a video of " + std::string(description.substr(begin, end - begin));
}

SemanticAnchorSet::SemanticAnchorSet(Matrix values, std::vector<ClassId> class_ids,
                                     std::vector<std::string> granularity_labels)
    : values_(std::move(values)),
      class_ids_(std::move(class_ids)),
      labels_(std::move(granularity_labels)) {
  parse_granularity_labels(labels_);
  if (class_ids_.empty()) fail(ErrorKind::kInvalidArgument, "anchor set has no classes");
  if (static_cast<std::size_t>(values_.rows()) != class_ids_.size() * labels_.size()) {
    fail(ErrorKind::kInvalidArgument, "anchor matrix rows do not match C x Gr");
  }
  if (values_.cols() == 0) fail(ErrorKind::kInvalidArgument, "anchor dimension is zero");
  for (std::size_t c = 0; c < class_ids_.size(); ++c) {
    if (!index_.emplace(class_ids_[c], c).second) {
      fail(ErrorKind::kInvalidArgument, "duplicate class id " + std::to_string(class_ids_[c]));
    }
  }
  for (Eigen::Index r = 0; r < values_.rows(); ++r) {
    const double norm = values_.row(r).norm();
    if (!(std::abs(norm - 1.0) <= kUnitTolerance)) {
      const std::size_t gr = labels_.size();
      fail(ErrorKind::kInvalidArgument,
           "anchor for class " + std::to_string(class_ids_[r / gr]) + ", granularity " +
               labels_[r % gr] + " is not unit-norm (" + std::to_string(norm) + ")");
    }
  }
}

std::size_t SemanticAnchorSet::class_index(ClassId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) {
    fail(ErrorKind::kInvalidArgument, "class " + std::to_string(id) + " not in anchor set");
  }
  return it->second;
}

std::size_t SemanticAnchorSet::granularity_index(std::string_view label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) return i;
  }
  fail(ErrorKind::kInvalidArgument, "unknown granularity label \"" + std::string(label) + "\"");
}

SemanticAnchorSet SemanticAnchorSet::global_only() const {
  Matrix global(class_ids_.size(), values_.cols());
  for (std::size_t c = 0; c < class_ids_.size(); ++c) {
    global.row(static_cast<Eigen::Index>(c)) = anchor(c, 0);
  }
  return SemanticAnchorSet(std::move(global), class_ids_, {"global"});
}

Tensor SemanticAnchorSet::to_tensor() const {
  return Tensor({class_ids_.size(), labels_.size(), dim()},
                std::vector<double>(values_.data(), values_.data() + values_.size()));
}

SemanticAnchorSet assemble_anchor_set(const Tensor& raw, const DatasetManifest& manifest) {
  const DatasetDims& dims = manifest.dims;
  const std::vector<std::size_t> expected{dims.classes, dims.granularities, dims.anchor_dim};
  if (raw.shape() != expected) {
    fail(ErrorKind::kDataCorruption, "anchor shape mismatch: expected " +
                                         shape_string(expected) + ", got " +
                                         shape_string(raw.shape()));
  }
  Matrix values(dims.classes * dims.granularities, dims.anchor_dim);
  std::copy(raw.data().begin(), raw.data().end(), values.data());
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    const double norm = values.row(r).norm();
    if (norm == 0.0) {
      const std::size_t c = static_cast<std::size_t>(r) / dims.granularities;
      const std::size_t g = static_cast<std::size_t>(r) % dims.granularities;
      fail(ErrorKind::kDataCorruption,
           "zero-norm anchor at class " + std::to_string(manifest.classes[c].id) +
               " (index " + std::to_string(c) + "), granularity " +
               manifest.granularity_labels[g] + " (index " + std::to_string(g) + ")");
    }
    values.row(r) /= norm;
  }
  return SemanticAnchorSet(std::move(values), manifest.class_ids(), manifest.granularity_labels);
}

Tensor granularity_view(const SemanticAnchorSet& anchors, std::string_view label) {
  const std::size_t g = anchors.granularity_index(label);
  std::vector<double> data;
  data.reserve(anchors.class_count() * anchors.dim());
  for (std::size_t c = 0; c < anchors.class_count(); ++c) {
    const auto row = anchors.anchor(c, g);
    data.insert(data.end(), row.data(), row.data() + row.size());
  }
  return Tensor({anchors.class_count(), anchors.dim()}, std::move(data));
}

}  // namespace zsr
