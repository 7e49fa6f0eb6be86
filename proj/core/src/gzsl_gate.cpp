#include "zsr/gzsl_gate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "zsr/error.hpp"
#include "zsr/metrics.hpp"

namespace zsr {
namespace {

std::vector<std::size_t> positions(const std::vector<ClassId>& all,
                                   const std::vector<ClassId>& subset) {
  std::vector<std::size_t> out;
  out.reserve(subset.size());
  for (ClassId c : subset) {
    out.push_back(static_cast<std::size_t>(std::lower_bound(all.begin(), all.end(), c) - all.begin()));
  }
  return out;
}

RowVector gather(const RowVector& v, const std::vector<std::size_t>& idx) {
  RowVector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out(static_cast<Eigen::Index>(k)) = v(static_cast<Eigen::Index>(idx[k]));
  }
  return out;
}

void check_split(const ClassSplit& split) {
  if (split.seen().empty() || split.unseen().empty()) {
    fail(ErrorKind::kProtocol, "gzsl requires nonempty seen and unseen sets");
  }
}

}  // namespace

double entropy(std::span<const double> probs) {
  if (probs.empty()) fail(ErrorKind::kInvalidArgument, "entropy of an empty distribution");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= -1e-6) || !std::isfinite(p)) {
      fail(ErrorKind::kInvalidArgument, "not a probability simplex: negative entry");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    fail(ErrorKind::kInvalidArgument, "not a probability simplex: sums to " + std::to_string(sum));
  }
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double entropy(const RowVector& probs) {
  return entropy(std::span<const double>(probs.data(), static_cast<std::size_t>(probs.size())));
}

std::vector<double> quantile_grid(std::vector<double> values, std::size_t count, double q_low,
                                  double q_high) {
  if (values.empty()) fail(ErrorKind::kInvalidArgument, "empty stream");
  if (count == 0) fail(ErrorKind::kInvalidArgument, "quantile count must be positive");
  std::sort(values.begin(), values.end());
  std::vector<double> grid;
  grid.reserve(count);
  const double last = static_cast<double>(values.size() - 1);
  for (std::size_t k = 0; k < count; ++k) {
    const double q =
        count == 1 ? q_low
                   : q_low + (q_high - q_low) * static_cast<double>(k) / static_cast<double>(count - 1);
    const double pos = q * last;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    grid.push_back(values[lo] + frac * (values[hi] - values[lo]));
  }
  return grid;
}

std::vector<double> midpoint_grid(std::vector<double> values) {
  if (values.empty()) fail(ErrorKind::kInvalidArgument, "empty stream");
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::vector<double> grid{0.0};
  for (std::size_t i = 1; i < values.size(); ++i) grid.push_back(values[i - 1] + 0.5 * (values[i] - values[i - 1]));
  grid.push_back(std::nextafter(values.back(), std::numeric_limits<double>::infinity()));
  return grid;
}

Calibration calibrate_delta(std::span<const GateSample> samples, const ClassSplit& split,
                            const GateConfig& cfg) {
  if (samples.empty()) fail(ErrorKind::kInvalidArgument, "empty stream");
  bool any_seen = false, any_unseen = false;
  std::vector<double> ents;
  ents.reserve(samples.size());
  for (const auto& s : samples) {
    any_seen = any_seen || split.is_seen(s.true_class);
    any_unseen = any_unseen || split.is_unseen(s.true_class);
    ents.push_back(s.entropy);
  }
  if (!any_seen || !any_unseen) {
    fail(ErrorKind::kInvalidArgument,
         "single-domain validation stream: harmonic mean needs seen and unseen samples");
  }
  std::vector<double> grid = cfg.grid;
  if (grid.empty()) {
    grid = cfg.quantiles == 0 ? midpoint_grid(ents) : quantile_grid(ents, cfg.quantiles, cfg.q_low, cfg.q_high);
  }

  Calibration cal;
  std::vector<ClassId> preds(samples.size()), labels(samples.size());
  bool have_best = false;
  double best_h = 0.0;
  for (double delta : grid) {
    if (!(delta >= 0.0)) fail(ErrorKind::kInvalidArgument, "delta must be nonnegative");
    std::size_t triage_hits = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const bool routed_seen = samples[i].entropy < delta;
      preds[i] = routed_seen ? samples[i].seen_pred : samples[i].unseen_pred;
      labels[i] = samples[i].true_class;
      triage_hits += routed_seen == split.is_seen(labels[i]) ? 1 : 0;
    }
    const GzslScores g = gzsl_metrics(preds, labels, split);
    CalibrationRow row{delta, *g.seen, *g.unseen, *g.harmonic,
                       static_cast<double>(triage_hits) / static_cast<double>(samples.size())};
    cal.table.push_back(row);
    if (!have_best || row.harmonic > best_h || (row.harmonic == best_h && delta < cal.delta)) {
      have_best = true;
      best_h = row.harmonic;
      cal.delta = delta;
    }
  }
  return cal;
}

std::vector<GateSample> gate_samples(std::span<const VisualFeatureMap> stream,
                                     const SemanticAnchorSet& anchors,
                                     const AlignmentParams& params, const ClassSplit& split) {
  check_split(split);
  const std::vector<ClassId> all = split.all_list();
  std::vector<std::size_t> all_idx;
  for (ClassId c : all) all_idx.push_back(anchors.class_index(c));
  std::vector<GateSample> out;
  out.reserve(stream.size());
  for (const auto& s : stream) {
    const GlobalScores scores = score_global(s, anchors, params, all_idx);
    RowVector logits = gather(scores.cosines, all_idx) / params.temperature;
    GatedPrediction seen = triage_logits(logits, split, std::numeric_limits<double>::infinity());
    GatedPrediction unseen = triage_logits(logits, split, 0.0);
    out.push_back(GateSample{s.class_id, seen.full_entropy, seen.prediction.label,
                             unseen.prediction.label});
  }
  return out;
}

Calibration calibrate_delta(std::span<const VisualFeatureMap> stream,
                            const SemanticAnchorSet& anchors, const AlignmentParams& params,
                            const ClassSplit& split, const GateConfig& cfg) {
  const auto samples = gate_samples(stream, anchors, params, split);
  return calibrate_delta(samples, split, cfg);
}

std::string calibration_csv(const Calibration& cal) {
  std::string out = "delta,S,U,H,triage\n";
  char buf[64];
  for (const auto& r : cal.table) {
    std::snprintf(buf, sizeof buf, "%.6f,", r.delta);
    out += buf;
    out += format_accuracy(r.seen_acc) + "," + format_accuracy(r.unseen_acc) + "," +
           format_accuracy(r.harmonic) + "," + format_accuracy(r.triage_acc) + "\n";
  }
  return out;
}

GatedPrediction triage_logits(const RowVector& full_logits, const ClassSplit& split, double delta) {
  check_split(split);
  if (!(delta >= 0.0)) fail(ErrorKind::kInvalidArgument, "delta must be nonnegative");
  const std::vector<ClassId> all = split.all_list();
  if (full_logits.size() != static_cast<Eigen::Index>(all.size())) {
    fail(ErrorKind::kInvalidArgument, "one logit per class of the split is required");
  }
  GatedPrediction g;
  g.full_entropy = entropy(softmax(full_logits));
  g.route = g.full_entropy < delta ? Route::kSeen : Route::kUnseen;
  std::vector<ClassId> routed = g.route == Route::kSeen ? split.seen_list() : split.unseen_list();
  const RowVector sub = gather(full_logits, positions(all, routed));
  g.prediction = make_prediction(std::move(routed), sub);
  return g;
}

GatedPrediction triage_and_classify(const VisualFeatureMap& features,
                                    const SemanticAnchorSet& refined,
                                    const AlignmentParams& params, const ClassSplit& split,
                                    double delta) {
  check_split(split);
  const std::vector<ClassId> all = split.all_list();
  std::vector<std::size_t> all_idx;
  for (ClassId c : all) all_idx.push_back(refined.class_index(c));
  const GlobalScores scores = score_global(features, refined, params, all_idx);
  return triage_logits(gather(scores.cosines, all_idx) / params.temperature, split, delta);
}

}  // namespace zsr
