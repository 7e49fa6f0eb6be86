#include <cmath>
#include <string>

#include "zsr/alignment.hpp"
#include "zsr/error.hpp"

namespace zsr {
namespace {

double cosine(const RowVector& a, const RowVector& b) {
  const double denom = a.norm() * b.norm();
  if (!(denom > 0.0)) fail(ErrorKind::kNumeric, "cosine similarity of a zero vector");
  return a.dot(b) / denom;
}

std::vector<std::size_t> seen_indices(const SemanticAnchorSet& anchors, const ClassSplit& split) {
  std::vector<std::size_t> out;
  for (ClassId c : split.seen()) out.push_back(anchors.class_index(c));
  return out;
}

void check_compatible(const SemanticAnchorSet& anchors, const AlignmentParams& params) {
  params.validate();
  if (anchors.granularity_count() != params.granularities()) {
    fail(ErrorKind::kInvalidArgument,
         "dimension mismatch: anchors have Gr=" + std::to_string(anchors.granularity_count()) +
             ", params have " + std::to_string(params.granularities()) + " granularity weights");
  }
  if (anchors.dim() != params.anchor_dim()) {
    fail(ErrorKind::kInvalidArgument,
         "dimension mismatch: anchors have d=" + std::to_string(anchors.dim()) +
             ", params expect d=" + std::to_string(params.anchor_dim()));
  }
}

struct BatchEvaluation {
  std::vector<FusionTrace> traces;
  Matrix losses;  // B x Gr per-granularity contrastive losses
  double loss = 0.0;
};

// Forward (and optionally backward) pass of the batch-mean training loss.
BatchEvaluation evaluate_batch(std::span<const VisualFeatureMap> batch,
                               const SemanticAnchorSet& anchors, const AlignmentParams& params,
                               const ClassSplit& split, AlignmentGrads* grads) {
  if (batch.empty()) fail(ErrorKind::kInvalidArgument, "empty batch");
  check_compatible(anchors, params);
  const std::vector<std::size_t> negatives = seen_indices(anchors, split);
  const std::size_t batch_size = batch.size();
  const std::size_t gr = anchors.granularity_count();
  const double inv_tau = 1.0 / params.temperature;

  std::vector<std::size_t> own(batch_size);
  BatchEvaluation ev;
  ev.traces.reserve(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b) {
    if (!split.is_seen(batch[b].class_id)) {
      fail(ErrorKind::kInvalidArgument,
           "class not seen: sample " + batch[b].sample_id + " has class " +
               std::to_string(batch[b].class_id));
    }
    own[b] = anchors.class_index(batch[b].class_id);
    ev.traces.push_back(fuse_forward(anchors.class_block(own[b]), batch[b].values, params));
  }

  const Vector alpha = params.alpha();
  ev.losses.resize(static_cast<Eigen::Index>(batch_size), static_cast<Eigen::Index>(gr));
  std::vector<Matrix> d_projected;
  if (grads != nullptr) {
    d_projected.assign(batch_size, Matrix::Zero(static_cast<Eigen::Index>(gr),
                                                static_cast<Eigen::Index>(anchors.dim())));
  }

  RowVector text_logits(static_cast<Eigen::Index>(negatives.size()));
  RowVector visual_logits(static_cast<Eigen::Index>(batch_size));
  for (std::size_t i = 0; i < gr; ++i) {
    const auto gi = static_cast<Eigen::Index>(i);
    for (std::size_t b = 0; b < batch_size; ++b) {
      const auto v = ev.traces[b].projected.row(gi);
      const auto positive_anchor = anchors.anchor(own[b], i);
      for (std::size_t o = 0; o < negatives.size(); ++o) {
        text_logits(static_cast<Eigen::Index>(o)) = v.dot(anchors.anchor(negatives[o], i)) * inv_tau;
      }
      for (std::size_t w = 0; w < batch_size; ++w) {
        visual_logits(static_cast<Eigen::Index>(w)) =
            ev.traces[w].projected.row(gi).dot(positive_anchor) * inv_tau;
      }
      const double positive = visual_logits(static_cast<Eigen::Index>(b));
      const double loss = 0.5 * (log_sum_exp(text_logits) - positive) +
                          0.5 * (log_sum_exp(visual_logits) - positive);
      ev.losses(static_cast<Eigen::Index>(b), gi) = loss;

      if (grads != nullptr) {
        const double c = 0.5 * alpha(gi) / static_cast<double>(batch_size) * inv_tau;
        const RowVector p_text = softmax(text_logits);
        RowVector expected = RowVector::Zero(static_cast<Eigen::Index>(anchors.dim()));
        for (std::size_t o = 0; o < negatives.size(); ++o) {
          expected += p_text(static_cast<Eigen::Index>(o)) * anchors.anchor(negatives[o], i);
        }
        d_projected[b].row(gi) += c * (expected - 2.0 * positive_anchor);
        const RowVector p_visual = softmax(visual_logits);
        for (std::size_t w = 0; w < batch_size; ++w) {
          d_projected[w].row(gi) += c * p_visual(static_cast<Eigen::Index>(w)) * positive_anchor;
        }
      }
    }
  }
  const Vector per_granularity = ev.losses.colwise().mean().transpose();
  ev.loss = alpha.dot(per_granularity);

  if (grads != nullptr) {
    for (std::size_t b = 0; b < batch_size; ++b) {
      fuse_backward(ev.traces[b], batch[b].values, d_projected[b], params, grads, nullptr);
    }
    double total = 0.0;
    for (Eigen::Index j = 0; j < params.alpha_raw.size(); ++j) total += softplus(params.alpha_raw(j));
    const double weighted = ev.loss;
    for (Eigen::Index j = 0; j < params.alpha_raw.size(); ++j) {
      grads->alpha_raw(j) += sigmoid(params.alpha_raw(j)) / total * (per_granularity(j) - weighted);
    }
    grads->loss = ev.loss;
  }
  return ev;
}

}  // namespace

double contrastive_loss(const RowVector& projected, ClassId class_id, std::size_t granularity,
                        const SemanticAnchorSet& anchors, std::span<const BatchProjection> batch,
                        const ClassSplit& split, double temperature) {
  if (!split.is_seen(class_id)) {
    fail(ErrorKind::kInvalidArgument, "class not seen: " + std::to_string(class_id));
  }
  if (batch.empty()) fail(ErrorKind::kInvalidArgument, "empty batch");
  if (granularity >= anchors.granularity_count()) {
    fail(ErrorKind::kInvalidArgument, "granularity index out of range");
  }
  if (!(temperature > 0.0)) fail(ErrorKind::kInvalidArgument, "temperature must be positive");
  bool contains_self = false;
  for (const auto& m : batch) {
    if (m.class_id == class_id && m.projected.size() == projected.size() &&
        m.projected == projected) {
      contains_self = true;
    }
  }
  if (!contains_self) fail(ErrorKind::kInvalidArgument, "batch must contain the sample itself");

  const RowVector positive_anchor = anchors.anchor(anchors.class_index(class_id), granularity);
  const double positive = cosine(projected, positive_anchor) / temperature;

  RowVector text_logits(static_cast<Eigen::Index>(split.seen().size()));
  Eigen::Index k = 0;
  for (ClassId o : split.seen()) {
    text_logits(k++) =
        cosine(projected, anchors.anchor(anchors.class_index(o), granularity)) / temperature;
  }
  RowVector visual_logits(static_cast<Eigen::Index>(batch.size()));
  for (std::size_t w = 0; w < batch.size(); ++w) {
    visual_logits(static_cast<Eigen::Index>(w)) =
        cosine(batch[w].projected, positive_anchor) / temperature;
  }
  return 0.5 * (log_sum_exp(text_logits) - positive) + 0.5 * (log_sum_exp(visual_logits) - positive);
}

double total_loss(const VisualFeatureMap& sample, const SemanticAnchorSet& anchors,
                  const AlignmentParams& params, std::span<const VisualFeatureMap> batch,
                  const ClassSplit& split) {
  std::size_t self = batch.size();
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b].sample_id == sample.sample_id && batch[b].class_id == sample.class_id) {
      self = b;
      break;
    }
  }
  if (self == batch.size()) {
    fail(ErrorKind::kInvalidArgument, "batch must contain sample " + sample.sample_id);
  }
  const BatchEvaluation ev = evaluate_batch(batch, anchors, params, split, nullptr);
  return params.alpha().dot(ev.losses.row(static_cast<Eigen::Index>(self)).transpose());
}

AlignmentGrads compute_gradients(std::span<const VisualFeatureMap> batch,
                                 const SemanticAnchorSet& anchors, const AlignmentParams& params,
                                 const ClassSplit& split) {
  AlignmentGrads grads = AlignmentGrads::zeros_like(params);
  evaluate_batch(batch, anchors, params, split, &grads);
  return grads;
}

}  // namespace zsr
