#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "zsr/anchors.hpp"
#include "zsr/dataset.hpp"
#include "zsr/linalg.hpp"

namespace zsr {

// How a sample's node features are pooled into one row per granularity.
//   kGlobal   - attention fusion with global-only anchors (Gr = 1)
//   kStatic   - fixed body-part / temporal-third means, no attention
//   kAdaptive - cross-modal attention over all nodes, one query per granularity
enum class PartitionMode { kGlobal, kStatic, kAdaptive };

PartitionMode parse_partition_mode(std::string_view name);
const char* partition_mode_name(PartitionMode mode);

// Joint groups for static pooling. Node s of a feature map is joint
// (s % joints) at frame (s / joints); frames split into `temporal_segments`
// equal runs with the remainder going to the last one.
struct StaticPartition {
  std::size_t joints = 25;
  std::vector<std::vector<std::size_t>> parts;
  std::size_t temporal_segments = 3;

  // 25-joint layout: head, hands, torso, legs.
  static StaticPartition ntu25();

  std::size_t granularities() const { return 1 + parts.size() + temporal_segments; }
  // Throws on out-of-range, duplicated or uncovered joints and empty groups.
  void validate() const;
};

// 1 + P + Z rows: global mean, per-part means, per-segment means.
Matrix static_fuse(const VisualFeatureMap& features, const StaticPartition& partition);

struct AlignmentDims {
  std::size_t anchor_dim = 512;   // d
  std::size_t feature_dim = 256;  // n
  std::size_t hidden = 150;       // h, shared query/key width
  std::size_t mlp_hidden = 512;   // projection MLP width
  std::size_t granularities = 8;  // Gr
};

// Trainable alignment parameters plus the pooling mode they were trained for.
struct AlignmentParams {
  Matrix w_query;    // d x h
  Matrix w_key;      // n x h
  Matrix w1;         // n x H
  Vector b1;         // H
  Matrix w2;         // H x d
  Vector b2;         // d
  Vector alpha_raw;  // Gr, unconstrained
  double temperature = 0.07;

  PartitionMode mode = PartitionMode::kAdaptive;
  StaticPartition partition = StaticPartition::ntu25();

  static AlignmentParams init(const AlignmentDims& dims, std::uint64_t seed);

  std::size_t anchor_dim() const { return static_cast<std::size_t>(w2.cols()); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(w1.rows()); }
  std::size_t hidden() const { return static_cast<std::size_t>(w_query.cols()); }
  std::size_t mlp_hidden() const { return static_cast<std::size_t>(w1.cols()); }
  std::size_t granularities() const { return static_cast<std::size_t>(alpha_raw.size()); }

  // Normalized softplus weights: strictly positive, summing to 1.
  Vector alpha() const;

  // Shape and positivity checks; throws on violation.
  void validate() const;
};

// Gradients for every trainable field of AlignmentParams.
struct AlignmentGrads {
  Matrix w_query, w_key, w1, w2;
  Vector b1, b2, alpha_raw;
  double loss = 0.0;

  static AlignmentGrads zeros_like(const AlignmentParams& p);
};

struct FusionOutput {
  Matrix attention;  // Gr x S, rows on the simplex
  Matrix fused;      // Gr x n
  Matrix projected;  // Gr x d, unit rows
};

// Cross-modal attention: Q = F W_Q, K = G W_K, A = softmax(Q K^T / sqrt(h)),
// R = A G, projected row i = normalize(mlp(R_i)).
FusionOutput attention_fuse(const Matrix& queries, const VisualFeatureMap& features,
                            const AlignmentParams& params);

// Forward pass that keeps every intermediate needed for backprop. Static mode
// ignores `queries` and pools with `params.partition`.
struct FusionTrace {
  Matrix queries;     // Gr x d
  Matrix q;           // Gr x h
  Matrix keys;        // S x h
  Matrix attention;   // Gr x S (adaptive/global only)
  Matrix fused;       // Gr x n
  Matrix pre_hidden;  // Gr x H
  Matrix hidden;      // Gr x H after ReLU
  Matrix out;         // Gr x d before normalization
  Vector out_norm;    // Gr
  Matrix projected;   // Gr x d
};

// `keys` may be supplied when W_K is frozen and the keys are cached. With
// `global_only` just the first (global) row is computed.
FusionTrace fuse_forward(const Matrix& queries, const Matrix& features,
                         const AlignmentParams& params, const Matrix* keys = nullptr,
                         bool global_only = false);

// Backprop of d(loss)/d(projected). Accumulates parameter gradients into
// `grads` and query gradients into `d_queries` when those are non-null.
void fuse_backward(const FusionTrace& trace, const Matrix& features,
                   const Matrix& d_projected, const AlignmentParams& params,
                   AlignmentGrads* grads, Matrix* d_queries);

// One projected visual row with the class label of its sample.
struct BatchProjection {
  RowVector projected;
  ClassId class_id = 0;
};

// Symmetric InfoNCE for one granularity:
//   -1/2 log softmax over seen-class anchors   (text side)
//   -1/2 log softmax over batch projections    (visual side)
// Both denominators include the positive pair; sim is cosine. The batch must
// contain the sample itself.
double contrastive_loss(const RowVector& projected, ClassId class_id, std::size_t granularity,
                        const SemanticAnchorSet& anchors,
                        std::span<const BatchProjection> batch, const ClassSplit& split,
                        double temperature);

// Granularity-weighted training loss of `sample` within `batch` (which must
// contain it): sum_i alpha_i * contrastive_loss_i. Queries are the anchors of
// each sample's own class.
double total_loss(const VisualFeatureMap& sample, const SemanticAnchorSet& anchors,
                  const AlignmentParams& params, std::span<const VisualFeatureMap> batch,
                  const ClassSplit& split);

// Exact gradients of the batch-mean training loss.
AlignmentGrads compute_gradients(std::span<const VisualFeatureMap> batch,
                                 const SemanticAnchorSet& anchors,
                                 const AlignmentParams& params, const ClassSplit& split);

// Class-agnostic inference query rows: the mean over `class_indices` of each
// granularity's anchors (Gr x d).
Matrix inference_queries(const SemanticAnchorSet& anchors,
                         std::span<const std::size_t> class_indices);

}  // namespace zsr
