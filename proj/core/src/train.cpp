#include "zsr/train.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "zsr/error.hpp"
#include "zsr/optim.hpp"
#include "zsr/random.hpp"
#include "zsr/refinement.hpp"

namespace zsr {
namespace {

struct ParamOptimizer {
  AdamState w_query, w_key, w1, w2, b1, b2, alpha_raw;

  void step(AlignmentParams& p, const AlignmentGrads& g, double lr) {
    w_query.step(p.w_query, g.w_query, lr);
    w_key.step(p.w_key, g.w_key, lr);
    w1.step(p.w1, g.w1, lr);
    w2.step(p.w2, g.w2, lr);
    b1.step(p.b1, g.b1, lr);
    b2.step(p.b2, g.b2, lr);
    alpha_raw.step(p.alpha_raw, g.alpha_raw, lr);
  }
};

void check_config(const TrainConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0)) fail(ErrorKind::kInvalidArgument, "learning rate must be >= 0");
  if (cfg.batch_size == 0) fail(ErrorKind::kInvalidArgument, "batch size must be positive");
  if (!(cfg.validation_fraction >= 0.0 && cfg.validation_fraction < 1.0)) {
    fail(ErrorKind::kInvalidArgument, "validation fraction must be in [0, 1)");
  }
  if (cfg.hidden == 0 || cfg.mlp_hidden == 0) {
    fail(ErrorKind::kInvalidArgument, "hidden widths must be positive");
  }
}

}  // namespace

SemanticAnchorSet anchors_for_mode(const SemanticAnchorSet& anchors, PartitionMode mode) {
  return mode == PartitionMode::kGlobal ? anchors.global_only() : anchors;
}

double evaluate_accuracy(std::span<const VisualFeatureMap> samples,
                         const SemanticAnchorSet& anchors, const AlignmentParams& params,
                         std::span<const ClassId> candidates) {
  if (samples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& s : samples) {
    if (predict(s, anchors, params, candidates).label == s.class_id) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

TrainResult train(std::span<const VisualFeatureMap> samples, const SemanticAnchorSet& anchors_in,
                  const ClassSplit& split, const TrainConfig& cfg) {
  check_config(cfg);
  if (split.seen().empty()) fail(ErrorKind::kInvalidArgument, "empty seen set");
  if (samples.empty()) fail(ErrorKind::kInvalidArgument, "no training samples");
  for (const auto& s : samples) {
    if (!split.is_seen(s.class_id)) {
      fail(ErrorKind::kInvalidArgument, "class not seen: sample " + s.sample_id + " has class " +
                                            std::to_string(s.class_id));
    }
  }
  const SemanticAnchorSet anchors = anchors_for_mode(anchors_in, cfg.mode);

  AlignmentDims dims;
  dims.anchor_dim = anchors.dim();
  dims.feature_dim = static_cast<std::size_t>(samples.front().values.cols());
  dims.hidden = cfg.hidden;
  dims.mlp_hidden = cfg.mlp_hidden;
  dims.granularities = anchors.granularity_count();
  Rng rng(substream_seed(cfg.seed, "train"));
  AlignmentParams params = AlignmentParams::init(dims, rng.next_u64());
  params.temperature = cfg.temperature;
  params.mode = cfg.mode;
  params.partition = cfg.partition;
  params.validate();

  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::size_t n_val = static_cast<std::size_t>(
      std::floor(cfg.validation_fraction * static_cast<double>(samples.size())));
  if (cfg.validation_fraction > 0.0 && n_val == 0 && samples.size() >= 2) n_val = 1;
  std::vector<VisualFeatureMap> val_set;
  std::vector<VisualFeatureMap> train_set;
  for (std::size_t k = 0; k < order.size(); ++k) {
    (k < n_val ? val_set : train_set).push_back(samples[order[k]]);
  }
  // With no held-out slice, select on the training set itself.
  const std::span<const VisualFeatureMap> val_view =
      val_set.empty() ? std::span<const VisualFeatureMap>(train_set) : val_set;
  const std::vector<ClassId> seen = split.seen_list();
  const std::size_t batch = std::min(cfg.batch_size, train_set.size());

  TrainResult res;
  res.params = params;
  res.best_validation_accuracy = -1.0;
  ParamOptimizer opt;
  std::size_t since_best = 0;
  std::vector<VisualFeatureMap> minibatch;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<std::size_t> perm(train_set.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(perm);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < perm.size(); start += batch, ++batch_index) {
      const std::size_t end = std::min(start + batch, perm.size());
      minibatch.clear();
      for (std::size_t k = start; k < end; ++k) minibatch.push_back(train_set[perm[k]]);
      const AlignmentGrads g = compute_gradients(minibatch, anchors, params, split);
      if (!std::isfinite(g.loss)) {
        fail(ErrorKind::kNumeric, "non-finite training loss at epoch " + std::to_string(epoch) +
                                      ", batch " + std::to_string(batch_index));
      }
      loss_sum += g.loss * static_cast<double>(end - start);
      opt.step(params, g, cfg.learning_rate);
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(train_set.size());
    stats.validation_accuracy = evaluate_accuracy(val_view, anchors, params, seen);
    res.history.push_back(stats);
    res.epochs_run = epoch;
    if (stats.validation_accuracy > res.best_validation_accuracy) {
      res.best_validation_accuracy = stats.validation_accuracy;
      res.best_epoch = epoch;
      res.params = params;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  if (res.best_validation_accuracy < 0.0) res.best_validation_accuracy = 0.0;
  return res;
}

TrainResult train(const ValidatedDataset& dataset, const TrainConfig& cfg) {
  const auto& m = dataset.manifest();
  const SemanticAnchorSet anchors = assemble_anchor_set(dataset.raw_anchors(), m);
  const auto idx = dataset.select([&](ClassId c) { return m.split.is_seen(c); });
  if (idx.empty()) fail(ErrorKind::kInvalidArgument, "dataset has no seen-class samples");
  const auto samples = dataset.load_samples(idx);
  return train(samples, anchors, m.split, cfg);
}

}  // namespace zsr
