#include "zsr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "zsr/error.hpp"

namespace zsr {
namespace {

void check_lengths(std::span<const ClassId> preds, std::span<const ClassId> labels) {
  if (preds.size() != labels.size()) {
    fail(ErrorKind::kInvalidArgument, "length mismatch: " + std::to_string(preds.size()) +
                                          " predictions, " + std::to_string(labels.size()) +
                                          " labels");
  }
  if (preds.empty()) fail(ErrorKind::kInvalidArgument, "empty prediction list");
}

}  // namespace

double top1_accuracy(std::span<const ClassId> preds, std::span<const ClassId> labels) {
  check_lengths(preds, labels);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

double harmonic_mean(double seen, double unseen) {
  const double sum = seen + unseen;
  return sum > 0.0 ? 2.0 * seen * unseen / sum : 0.0;
}

double GzslScores::require_harmonic() const {
  if (!harmonic) {
    fail(ErrorKind::kInvalidArgument,
         std::string("harmonic mean undefined: no ") + (seen ? "unseen" : "seen") + " samples");
  }
  return *harmonic;
}

GzslScores gzsl_metrics(std::span<const ClassId> preds, std::span<const ClassId> labels,
                        const ClassSplit& split) {
  check_lengths(preds, labels);
  std::size_t n_seen = 0, hit_seen = 0, n_unseen = 0, hit_unseen = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool hit = preds[i] == labels[i];
    if (split.is_seen(labels[i])) {
      ++n_seen;
      hit_seen += hit ? 1 : 0;
    } else if (split.is_unseen(labels[i])) {
      ++n_unseen;
      hit_unseen += hit ? 1 : 0;
    } else {
      fail(ErrorKind::kInvalidArgument, "label " + std::to_string(labels[i]) + " not in split");
    }
  }
  GzslScores g;
  if (n_seen > 0) g.seen = static_cast<double>(hit_seen) / static_cast<double>(n_seen);
  if (n_unseen > 0) g.unseen = static_cast<double>(hit_unseen) / static_cast<double>(n_unseen);
  if (g.seen && g.unseen) g.harmonic = harmonic_mean(*g.seen, *g.unseen);
  return g;
}

std::size_t ConfusionMatrix::index(ClassId c) const {
  const auto it = std::find(classes.begin(), classes.end(), c);
  if (it == classes.end()) fail(ErrorKind::kInvalidArgument, "unknown class " + std::to_string(c));
  return static_cast<std::size_t>(it - classes.begin());
}

std::size_t ConfusionMatrix::row_sum(std::size_t r) const {
  std::size_t s = 0;
  for (std::size_t v : counts.at(r)) s += v;
  return s;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t s = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) s += counts[i][i];
  return s;
}

ConfusionMatrix confusion_matrix(std::span<const ClassId> preds, std::span<const ClassId> labels,
                                 std::span<const ClassId> class_order) {
  if (preds.size() != labels.size()) fail(ErrorKind::kInvalidArgument, "length mismatch");
  ConfusionMatrix m;
  m.classes.assign(class_order.begin(), class_order.end());
  m.counts.assign(m.classes.size(), std::vector<std::size_t>(m.classes.size(), 0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    ++m.counts[m.index(labels[i])][m.index(preds[i])];
  }
  return m;
}

double MetricsReport::min_class_accuracy() const {
  double lo = 1.0;
  for (const auto& [c, acc] : per_class_acc) lo = std::min(lo, acc);
  return per_class_acc.empty() ? 0.0 : lo;
}

MetricsReport make_report(std::span<const ClassId> preds, std::span<const ClassId> labels,
                          const ClassSplit& split, std::span<const ClassId> class_order) {
  MetricsReport r;
  r.n_samples = labels.size();
  r.confusion = confusion_matrix(preds, labels, class_order);
  if (labels.empty()) return r;
  r.top1 = top1_accuracy(preds, labels);
  r.gzsl = gzsl_metrics(preds, labels, split);
  for (std::size_t i = 0; i < r.confusion.classes.size(); ++i) {
    const std::size_t total = r.confusion.row_sum(i);
    if (total == 0) continue;
    r.per_class_acc[r.confusion.classes[i]] =
        static_cast<double>(r.confusion.counts[i][i]) / static_cast<double>(total);
  }
  return r;
}

std::vector<std::pair<ClassId, double>> classwise_delta(const MetricsReport& before,
                                                        const MetricsReport& after) {
  if (before.per_class_acc.size() != after.per_class_acc.size()) {
    fail(ErrorKind::kInvalidArgument, "class-set mismatch");
  }
  std::vector<std::pair<ClassId, double>> out;
  for (const auto& [c, acc] : after.per_class_acc) {
    const auto it = before.per_class_acc.find(c);
    if (it == before.per_class_acc.end()) fail(ErrorKind::kInvalidArgument, "class-set mismatch");
    out.emplace_back(c, acc - it->second);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

std::string format_accuracy(double value) {
  const double scaled = std::nearbyint(value * 1e4);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", scaled / 1e4);
  return buf;
}

}  // namespace zsr
