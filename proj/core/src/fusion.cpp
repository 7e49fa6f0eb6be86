#include <algorithm>
#include <cmath>
#include <string>

#include "zsr/alignment.hpp"
#include "zsr/error.hpp"
#include "zsr/random.hpp"

namespace zsr {
namespace {

std::vector<std::size_t> range(std::size_t first, std::size_t last) {
  std::vector<std::size_t> out;
  for (std::size_t j = first; j <= last; ++j) out.push_back(j);
  return out;
}

void fill_normal(Matrix& m, Rng& rng, double stddev) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * stddev;
}

// Mean of the rows of `features` listed in `nodes`.
RowVector mean_rows(const Matrix& features, const std::vector<std::size_t>& nodes) {
  RowVector acc = RowVector::Zero(features.cols());
  for (std::size_t s : nodes) acc += features.row(static_cast<Eigen::Index>(s));
  return acc / static_cast<double>(nodes.size());
}

// Node lists for each static group, global first.
std::vector<std::vector<std::size_t>> static_groups(std::size_t nodes,
                                                    const StaticPartition& partition,
                                                    bool global_only) {
  partition.validate();
  if (nodes % partition.joints != 0) {
    fail(ErrorKind::kInvalidArgument,
         "feature map has " + std::to_string(nodes) + " nodes, not a multiple of " +
             std::to_string(partition.joints) + " joints");
  }
  const std::size_t frames = nodes / partition.joints;
  std::vector<std::vector<std::size_t>> groups;
  groups.push_back(range(0, nodes - 1));
  if (global_only) return groups;

  for (const auto& part : partition.parts) {
    std::vector<std::size_t> g;
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t j : part) g.push_back(t * partition.joints + j);
    }
    std::sort(g.begin(), g.end());
    groups.push_back(std::move(g));
  }
  const std::size_t run = frames / partition.temporal_segments;
  if (run == 0) {
    fail(ErrorKind::kInvalidArgument, "empty group: " + std::to_string(frames) +
                                          " frames cannot fill " +
                                          std::to_string(partition.temporal_segments) +
                                          " temporal segments");
  }
  for (std::size_t z = 0; z < partition.temporal_segments; ++z) {
    const std::size_t begin = z * run;
    const std::size_t end = (z + 1 == partition.temporal_segments) ? frames : begin + run;
    std::vector<std::size_t> g;
    for (std::size_t t = begin; t < end; ++t) {
      for (std::size_t j = 0; j < partition.joints; ++j) g.push_back(t * partition.joints + j);
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

Matrix static_pool(const Matrix& features, const StaticPartition& partition, bool global_only) {
  const auto groups =
      static_groups(static_cast<std::size_t>(features.rows()), partition, global_only);
  Matrix fused(static_cast<Eigen::Index>(groups.size()), features.cols());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    fused.row(static_cast<Eigen::Index>(g)) = mean_rows(features, groups[g]);
  }
  return fused;
}

}  // namespace

PartitionMode parse_partition_mode(std::string_view name) {
  if (name == "global") return PartitionMode::kGlobal;
  if (name == "static") return PartitionMode::kStatic;
  if (name == "adaptive") return PartitionMode::kAdaptive;
  fail(ErrorKind::kInvalidArgument, "unknown partition mode \"" + std::string(name) + "\"");
}

const char* partition_mode_name(PartitionMode mode) {
  switch (mode) {
    case PartitionMode::kGlobal: return "global";
    case PartitionMode::kStatic: return "static";
    case PartitionMode::kAdaptive: return "adaptive";
  }
  return "?";
}

StaticPartition StaticPartition::ntu25() {
  StaticPartition p;
  p.joints = 25;
  std::vector<std::size_t> hands = range(4, 11);
  for (std::size_t j : range(21, 24)) hands.push_back(j);
  std::vector<std::size_t> legs = range(13, 15);
  for (std::size_t j : range(17, 19)) legs.push_back(j);
  p.parts = {range(0, 3), hands, {12, 16, 20}, legs};
  p.temporal_segments = 3;
  return p;
}

void StaticPartition::validate() const {
  if (joints == 0) fail(ErrorKind::kInvalidArgument, "partition has zero joints");
  if (temporal_segments == 0) fail(ErrorKind::kInvalidArgument, "empty group: zero temporal segments");
  std::vector<int> owner(joints, -1);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    if (parts[p].empty()) {
      fail(ErrorKind::kInvalidArgument, "empty group: body part " + std::to_string(p + 1));
    }
    for (std::size_t j : parts[p]) {
      if (j >= joints) {
        fail(ErrorKind::kInvalidArgument, "joint index out of range: " + std::to_string(j));
      }
      if (owner[j] != -1) {
        fail(ErrorKind::kInvalidArgument, "joint " + std::to_string(j) +
                                              " assigned to more than one body part");
      }
      owner[j] = static_cast<int>(p);
    }
  }
  for (std::size_t j = 0; j < joints; ++j) {
    if (owner[j] == -1) fail(ErrorKind::kInvalidArgument, "uncovered joint " + std::to_string(j));
  }
}

Matrix static_fuse(const VisualFeatureMap& features, const StaticPartition& partition) {
  return static_pool(features.values, partition, /*global_only=*/false);
}

AlignmentParams AlignmentParams::init(const AlignmentDims& dims, std::uint64_t seed) {
  if (dims.anchor_dim == 0 || dims.feature_dim == 0 || dims.hidden == 0 ||
      dims.mlp_hidden == 0 || dims.granularities == 0) {
    fail(ErrorKind::kInvalidArgument, "alignment dimensions must be positive");
  }
  Rng rng(seed);
  const auto d = static_cast<Eigen::Index>(dims.anchor_dim);
  const auto n = static_cast<Eigen::Index>(dims.feature_dim);
  const auto h = static_cast<Eigen::Index>(dims.hidden);
  const auto hm = static_cast<Eigen::Index>(dims.mlp_hidden);
  AlignmentParams p;
  p.w_query.resize(d, h);
  p.w_key.resize(n, h);
  p.w1.resize(n, hm);
  p.w2.resize(hm, d);
  fill_normal(p.w_query, rng, 1.0 / std::sqrt(static_cast<double>(d)));
  fill_normal(p.w_key, rng, 1.0 / std::sqrt(static_cast<double>(n)));
  fill_normal(p.w1, rng, std::sqrt(2.0 / static_cast<double>(n)));
  fill_normal(p.w2, rng, 1.0 / std::sqrt(static_cast<double>(hm)));
  p.b1 = Vector::Constant(hm, 0.01);
  p.b2 = Vector::Zero(d);
  p.alpha_raw = Vector::Zero(static_cast<Eigen::Index>(dims.granularities));
  return p;
}

Vector AlignmentParams::alpha() const {
  Vector w = alpha_raw.unaryExpr([](double x) { return softplus(x); });
  return w / w.sum();
}

void AlignmentParams::validate() const {
  const auto d = w_query.rows();
  const auto h = w_query.cols();
  const auto n = w_key.rows();
  const auto hm = w1.cols();
  const bool ok = d > 0 && h > 0 && n > 0 && hm > 0 && w_key.cols() == h && w1.rows() == n &&
                  b1.size() == hm && w2.rows() == hm && w2.cols() == d && b2.size() == d &&
                  alpha_raw.size() > 0;
  if (!ok) fail(ErrorKind::kInvalidArgument, "alignment parameter shapes are inconsistent");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    fail(ErrorKind::kInvalidArgument, "temperature must be positive");
  }
  if (mode == PartitionMode::kGlobal && alpha_raw.size() != 1) {
    fail(ErrorKind::kInvalidArgument, "global mode expects a single granularity weight");
  }
  if (mode == PartitionMode::kStatic) {
    partition.validate();
    if (partition.granularities() != static_cast<std::size_t>(alpha_raw.size())) {
      fail(ErrorKind::kInvalidArgument, "static partition granularities do not match alpha");
    }
  }
}

AlignmentGrads AlignmentGrads::zeros_like(const AlignmentParams& p) {
  AlignmentGrads g;
  g.w_query = Matrix::Zero(p.w_query.rows(), p.w_query.cols());
  g.w_key = Matrix::Zero(p.w_key.rows(), p.w_key.cols());
  g.w1 = Matrix::Zero(p.w1.rows(), p.w1.cols());
  g.w2 = Matrix::Zero(p.w2.rows(), p.w2.cols());
  g.b1 = Vector::Zero(p.b1.size());
  g.b2 = Vector::Zero(p.b2.size());
  g.alpha_raw = Vector::Zero(p.alpha_raw.size());
  return g;
}

FusionTrace fuse_forward(const Matrix& queries, const Matrix& features,
                         const AlignmentParams& params, const Matrix* keys, bool global_only) {
  if (features.cols() != params.w_key.rows() || features.rows() == 0) {
    fail(ErrorKind::kInvalidArgument,
         "dimension mismatch: feature map is " + std::to_string(features.rows()) + "x" +
             std::to_string(features.cols()) + ", params expect n=" +
             std::to_string(params.w_key.rows()));
  }
  FusionTrace t;
  if (params.mode == PartitionMode::kStatic) {
    t.fused = static_pool(features, params.partition, global_only);
  } else {
    if (queries.cols() != params.w_query.rows() || queries.rows() == 0) {
      fail(ErrorKind::kInvalidArgument,
           "dimension mismatch: queries have d=" + std::to_string(queries.cols()) +
               ", params expect d=" + std::to_string(params.w_query.rows()));
    }
    t.queries = global_only ? Matrix(queries.topRows(1)) : queries;
    t.q = t.queries * params.w_query;
    if (keys != nullptr) {
      t.keys = *keys;
    } else {
      t.keys = features * params.w_key;
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(params.w_query.cols()));
    Matrix logits = (t.q * t.keys.transpose()) * scale;
    t.attention.resize(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      t.attention.row(r) = softmax(logits.row(r));
    }
    t.fused = t.attention * features;
  }
  t.pre_hidden = (t.fused * params.w1).rowwise() + params.b1.transpose();
  t.hidden = t.pre_hidden.cwiseMax(0.0);
  t.out = (t.hidden * params.w2).rowwise() + params.b2.transpose();
  t.out_norm = t.out.rowwise().norm();
  for (Eigen::Index r = 0; r < t.out_norm.size(); ++r) {
    if (!(t.out_norm(r) > 1e-300)) {
      fail(ErrorKind::kNumeric, "projection head produced a zero vector");
    }
  }
  t.projected = t.out.array().colwise() / t.out_norm.array();
  return t;
}

void fuse_backward(const FusionTrace& t, const Matrix& features, const Matrix& d_projected,
                   const AlignmentParams& params, AlignmentGrads* grads, Matrix* d_queries) {
  // Row normalization: d out = (d v - (d v . v) v) / |out|
  Matrix d_out(d_projected.rows(), d_projected.cols());
  for (Eigen::Index r = 0; r < d_projected.rows(); ++r) {
    const double along = d_projected.row(r).dot(t.projected.row(r));
    d_out.row(r) = (d_projected.row(r) - along * t.projected.row(r)) / t.out_norm(r);
  }
  Matrix d_hidden = d_out * params.w2.transpose();
  Matrix d_pre = (t.pre_hidden.array() > 0.0).select(d_hidden, 0.0);
  if (grads != nullptr) {
    grads->w2.noalias() += t.hidden.transpose() * d_out;
    grads->b2 += d_out.colwise().sum().transpose();
    grads->w1.noalias() += t.fused.transpose() * d_pre;
    grads->b1 += d_pre.colwise().sum().transpose();
  }
  if (params.mode == PartitionMode::kStatic) {
    if (d_queries != nullptr) *d_queries = Matrix::Zero(t.fused.rows(), params.w_query.rows());
    return;
  }
  Matrix d_fused = d_pre * params.w1.transpose();
  Matrix d_att = d_fused * features.transpose();
  Matrix d_logits(d_att.rows(), d_att.cols());
  for (Eigen::Index r = 0; r < d_att.rows(); ++r) {
    const double mean = d_att.row(r).dot(t.attention.row(r));
    d_logits.row(r) = t.attention.row(r).array() * (d_att.row(r).array() - mean);
  }
  d_logits /= std::sqrt(static_cast<double>(params.w_query.cols()));
  Matrix d_q = d_logits * t.keys;
  if (grads != nullptr) {
    Matrix d_keys = d_logits.transpose() * t.q;
    grads->w_query.noalias() += t.queries.transpose() * d_q;
    grads->w_key.noalias() += features.transpose() * d_keys;
  }
  if (d_queries != nullptr) *d_queries = d_q * params.w_query.transpose();
}

FusionOutput attention_fuse(const Matrix& queries, const VisualFeatureMap& features,
                            const AlignmentParams& params) {
  AlignmentParams attention_params = params;
  if (attention_params.mode == PartitionMode::kStatic) {
    attention_params.mode = PartitionMode::kAdaptive;
  }
  FusionTrace t = fuse_forward(queries, features.values, attention_params);
  return FusionOutput{std::move(t.attention), std::move(t.fused), std::move(t.projected)};
}

Matrix inference_queries(const SemanticAnchorSet& anchors,
                         std::span<const std::size_t> class_indices) {
  if (class_indices.empty()) fail(ErrorKind::kInvalidArgument, "empty candidate set");
  const auto gr = static_cast<Eigen::Index>(anchors.granularity_count());
  Matrix q = Matrix::Zero(gr, static_cast<Eigen::Index>(anchors.dim()));
  for (std::size_t c : class_indices) q += anchors.class_block(c);
  return q / static_cast<double>(class_indices.size());
}

}  // namespace zsr
