#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace zsr::oracle {

Mat from(const Matrix& m) {
  Mat out(static_cast<std::size_t>(m.rows()), Vec(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  }
  return out;
}

Vec from(const Vector& v) { return Vec(v.data(), v.data() + v.size()); }
Vec from(const RowVector& v) { return Vec(v.data(), v.data() + v.size()); }

double log_sum_exp(const Vec& x) {
  double m = x[0];
  for (double v : x) m = std::max(m, v);
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

Vec softmax(const Vec& x) {
  const double lse = log_sum_exp(x);
  Vec p(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) p[i] = std::exp(x[i] - lse);
  return p;
}

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Vec& a) { return std::sqrt(dot(a, a)); }
double cosine(const Vec& a, const Vec& b) { return dot(a, b) / (norm(a) * norm(b)); }

Vec normalized(const Vec& a) {
  const double n = norm(a);
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] / n;
  return out;
}

namespace {

Mat matmul(const Mat& a, const Mat& b) {
  Mat out(a.size(), Vec(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
  return out;
}

Vec mlp_project(const Vec& x, const AlignmentParams& p) {
  const Mat w1 = from(p.w1), w2 = from(p.w2);
  const Vec b1 = from(p.b1), b2 = from(p.b2);
  Vec hidden(b1.size());
  for (std::size_t j = 0; j < b1.size(); ++j) {
    double s = b1[j];
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * w1[i][j];
    hidden[j] = s > 0.0 ? s : 0.0;
  }
  Vec out(b2.size());
  for (std::size_t j = 0; j < b2.size(); ++j) {
    double s = b2[j];
    for (std::size_t i = 0; i < hidden.size(); ++i) s += hidden[i] * w2[i][j];
    out[j] = s;
  }
  return normalized(out);
}

}  // namespace

Mat attention(const Mat& queries, const Mat& features, const AlignmentParams& params) {
  const Mat q = matmul(queries, from(params.w_query));
  const Mat k = matmul(features, from(params.w_key));
  const double scale = 1.0 / std::sqrt(static_cast<double>(q[0].size()));
  Mat a;
  for (const Vec& qi : q) {
    Vec logits;
    for (const Vec& ks : k) logits.push_back(dot(qi, ks) * scale);
    a.push_back(softmax(logits));
  }
  return a;
}

Mat static_pool(const Mat& features, const StaticPartition& partition) {
  const std::size_t joints = partition.joints;
  const std::size_t frames = features.size() / joints;
  const std::size_t n = features[0].size();
  auto mean_where = [&](auto pred) {
    Vec acc(n, 0.0);
    std::size_t count = 0;
    for (std::size_t s = 0; s < features.size(); ++s) {
      if (!pred(s / joints, s % joints)) continue;
      for (std::size_t j = 0; j < n; ++j) acc[j] += features[s][j];
      ++count;
    }
    for (double& v : acc) v /= static_cast<double>(count);
    return acc;
  };
  Mat rows;
  rows.push_back(mean_where([](std::size_t, std::size_t) { return true; }));
  for (const auto& part : partition.parts) {
    rows.push_back(mean_where([&](std::size_t, std::size_t j) {
      return std::find(part.begin(), part.end(), j) != part.end();
    }));
  }
  const std::size_t z_count = partition.temporal_segments;
  const std::size_t run = frames / z_count;
  for (std::size_t z = 0; z < z_count; ++z) {
    const std::size_t lo = z * run;
    const std::size_t hi = z + 1 == z_count ? frames : lo + run;
    rows.push_back(mean_where([&](std::size_t t, std::size_t) { return t >= lo && t < hi; }));
  }
  return rows;
}

Mat fuse(const Mat& queries, const Mat& features, const AlignmentParams& params) {
  Mat pooled;
  if (params.mode == PartitionMode::kStatic) {
    pooled = static_pool(features, params.partition);
  } else {
    const Mat a = attention(queries, features, params);
    for (const Vec& ai : a) {
      Vec r(features[0].size(), 0.0);
      for (std::size_t s = 0; s < features.size(); ++s)
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += ai[s] * features[s][j];
      pooled.push_back(r);
    }
  }
  Mat out;
  for (const Vec& r : pooled) out.push_back(mlp_project(r, params));
  return out;
}

Vec alpha(const Vec& alpha_raw) {
  Vec w;
  double total = 0.0;
  for (double x : alpha_raw) {
    w.push_back(std::log(1.0 + std::exp(x)));
    total += w.back();
  }
  for (double& v : w) v /= total;
  return w;
}

double contrastive(const Vec& projected, ClassId cls, std::size_t gran,
                   const SemanticAnchorSet& anchors, const std::vector<Vec>& batch_projected,
                   const ClassSplit& split, double temperature) {
  auto anchor = [&](ClassId c) { return from(RowVector(anchors.anchor(anchors.class_index(c), gran))); };
  const Vec pos_anchor = anchor(cls);
  const double positive = cosine(projected, pos_anchor) / temperature;
  Vec text;
  for (ClassId o : split.seen()) text.push_back(cosine(projected, anchor(o)) / temperature);
  Vec visual;
  for (const Vec& w : batch_projected) visual.push_back(cosine(w, pos_anchor) / temperature);
  return -0.5 * std::log(std::exp(positive - log_sum_exp(text))) -
         0.5 * std::log(std::exp(positive - log_sum_exp(visual)));
}

namespace {

std::vector<Mat> project_batch(std::span<const VisualFeatureMap> batch,
                               const SemanticAnchorSet& anchors, const AlignmentParams& params) {
  std::vector<Mat> out;
  for (const auto& s : batch) {
    const Mat q = from(Matrix(anchors.class_block(anchors.class_index(s.class_id))));
    out.push_back(fuse(q, from(s.values), params));
  }
  return out;
}

double total_from_projections(std::size_t self, std::span<const VisualFeatureMap> batch,
                              const std::vector<Mat>& proj, const SemanticAnchorSet& anchors,
                              const AlignmentParams& params, const ClassSplit& split) {
  const Vec w = alpha(from(params.alpha_raw));
  double loss = 0.0;
  for (std::size_t g = 0; g < w.size(); ++g) {
    std::vector<Vec> rows;
    for (const Mat& p : proj) rows.push_back(p[g]);
    loss += w[g] * contrastive(proj[self][g], batch[self].class_id, g, anchors, rows, split,
                               params.temperature);
  }
  return loss;
}

}  // namespace

double total_loss(std::size_t self, std::span<const VisualFeatureMap> batch,
                  const SemanticAnchorSet& anchors, const AlignmentParams& params,
                  const ClassSplit& split) {
  return total_from_projections(self, batch, project_batch(batch, anchors, params), anchors,
                                params, split);
}

double batch_loss(std::span<const VisualFeatureMap> batch, const SemanticAnchorSet& anchors,
                  const AlignmentParams& params, const ClassSplit& split) {
  const auto proj = project_batch(batch, anchors, params);
  double s = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    s += total_from_projections(b, batch, proj, anchors, params, split);
  }
  return s / static_cast<double>(batch.size());
}

Mat refine(const Mat& anchors, const Mat& scale, const Mat& bias) {
  Mat out;
  for (std::size_t r = 0; r < anchors.size(); ++r) {
    Vec u(anchors[r].size());
    for (std::size_t j = 0; j < u.size(); ++j) u[j] = scale[r][j] * anchors[r][j] + bias[r][j];
    out.push_back(normalized(u));
  }
  return out;
}

OraclePrediction predict(const Mat& features, const Mat& refined, const std::vector<ClassId>& ids,
                         std::size_t gr, const AlignmentParams& params,
                         std::vector<ClassId> candidates, const std::vector<ClassId>& query) {
  std::sort(candidates.begin(), candidates.end());
  auto row_of = [&](ClassId c) {
    const auto pos = static_cast<std::size_t>(std::find(ids.begin(), ids.end(), c) - ids.begin());
    return refined[pos * gr];
  };
  const std::vector<ClassId>& qc = query.empty() ? candidates : query;
  Vec q(refined[0].size(), 0.0);
  for (ClassId c : qc) {
    const Vec r = row_of(c);
    for (std::size_t j = 0; j < q.size(); ++j) q[j] += r[j] / static_cast<double>(qc.size());
  }
  const Vec v = fuse(Mat{q}, features, params)[0];
  Vec logits;
  for (ClassId c : candidates) logits.push_back(cosine(v, row_of(c)) / params.temperature);
  OraclePrediction p;
  p.classes = candidates;
  p.probs = softmax(logits);
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.probs.size(); ++i) {
    if (p.probs[i] > p.probs[best]) best = i;
  }
  p.label = candidates[best];
  return p;
}

double adaptation_loss(std::span<const BankEntry> batch, const SemanticAnchorSet& anchors,
                       const Mat& scale, const Mat& bias, const AlignmentParams& params,
                       const CandidateSets& sets) {
  const Mat refined = refine(from(anchors.values()), scale, bias);
  const std::size_t gr = anchors.granularity_count();
  double loss = 0.0;
  for (const BankEntry& e : batch) {
    const auto& cands = sets.for_route(e.route);
    const OraclePrediction p = predict(from(e.features->values), refined, anchors.class_ids(), gr,
                                       params, cands, sets.all);
    const auto k = static_cast<std::size_t>(
        std::find(p.classes.begin(), p.classes.end(), e.pseudo_label) - p.classes.begin());
    loss -= std::log(p.probs[k]);
  }
  return loss / static_cast<double>(batch.size());
}

Mat finite_difference(const std::function<double()>& f, Mat& x, double eps) {
  Mat g(x.size(), Vec(x.empty() ? 0 : x[0].size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < x[i].size(); ++j) {
      const double keep = x[i][j];
      x[i][j] = keep + eps;
      const double up = f();
      x[i][j] = keep - eps;
      const double down = f();
      x[i][j] = keep;
      g[i][j] = (up - down) / (2.0 * eps);
    }
  }
  return g;
}

Vec finite_difference(const std::function<double()>& f, Vec& x, double eps) {
  Mat m{x};
  auto wrapped = [&] {
    x = m[0];
    return f();
  };
  Mat g = finite_difference(wrapped, m, eps);
  x = m[0];
  return g[0];
}

Vec finite_difference(const std::function<double()>& f, double* data, std::size_t size,
                      double eps) {
  Vec g(size);
  for (std::size_t i = 0; i < size; ++i) {
    const double keep = data[i];
    data[i] = keep + eps;
    const double up = f();
    data[i] = keep - eps;
    const double down = f();
    data[i] = keep;
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

double relative_error(const Mat& a, const Mat& b, double floor) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      diff += (a[i][j] - b[i][j]) * (a[i][j] - b[i][j]);
      na += a[i][j] * a[i][j];
      nb += b[i][j] * b[i][j];
    }
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

double relative_error(const Vec& a, const Vec& b, double floor) {
  return relative_error(Mat{a}, Mat{b}, floor);
}

double relative_error(const double* analytic, const Vec& numeric, double floor) {
  return relative_error(Vec(analytic, analytic + numeric.size()), numeric, floor);
}

}  // namespace zsr::oracle
