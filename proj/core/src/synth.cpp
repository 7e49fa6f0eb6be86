#include "zsr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>
#include <string>

#include "zsr/alignment.hpp"
#include "zsr/error.hpp"
#include "zsr/random.hpp"

namespace zsr {
namespace {

double round_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

Matrix round_f32(Matrix m) {
  return m.unaryExpr([](double x) { return round_f32(x); });
}

RowVector gaussian_row(std::size_t dim, Rng& rng) {
  RowVector v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
  return v;
}

// k orthonormal rows in R^dim by Gram-Schmidt on Gaussian draws.
Matrix orthonormal_rows(std::size_t k, std::size_t dim, Rng& rng) {
  Matrix basis(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < k; ++r) {
    for (;;) {
      RowVector v = gaussian_row(dim, rng);
      for (std::size_t q = 0; q < r; ++q) {
        v -= v.dot(basis.row(static_cast<Eigen::Index>(q))) * basis.row(static_cast<Eigen::Index>(q));
      }
      const double n = v.norm();
      if (n > 1e-8) {
        basis.row(static_cast<Eigen::Index>(r)) = v / n;
        break;
      }
    }
  }
  return basis;
}

// Unit vector uniformly distributed in the span of `latent` rows.
RowVector latent_direction(const Matrix& latent, Rng& rng) {
  RowVector coeff = gaussian_row(static_cast<std::size_t>(latent.rows()), rng);
  coeff /= coeff.norm();
  return coeff * latent;
}

std::string sample_name(const char* subset, ClassId c, std::size_t k) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_c%03d_%04zu", subset, c, k);
  return buf;
}

struct Generator {
  const SynthConfig& cfg;
  Matrix latent;                           // latent_dim x d
  Matrix map;                              // d x n, node feature = z * map
  std::vector<Matrix> class_anchors;       // Gr x d per class, before rounding
  std::vector<std::size_t> part_of_joint;  // 25 entries
  std::vector<std::size_t> segment_of_frame;

  VisualFeatureMap sample(ClassId c, const std::string& id, double spread, Rng& rng) const {
    const double scale = spread / std::sqrt(static_cast<double>(cfg.latent_dim));
    RowVector jitter = RowVector::Zero(static_cast<Eigen::Index>(cfg.anchor_dim));
    for (Eigen::Index k = 0; k < latent.rows(); ++k) jitter += rng.normal() * scale * latent.row(k);
    const Matrix& a = class_anchors[static_cast<std::size_t>(c)];
    Matrix z = a.rowwise() + jitter;  // Gr x d

    const std::size_t joints = part_of_joint.size();
    Matrix latent_nodes(static_cast<Eigen::Index>(cfg.nodes()), static_cast<Eigen::Index>(cfg.anchor_dim));
    for (std::size_t t = 0; t < cfg.frames; ++t) {
      for (std::size_t j = 0; j < joints; ++j) {
        const auto part = static_cast<Eigen::Index>(1 + part_of_joint[j]);
        const auto seg = static_cast<Eigen::Index>(1 + cfg.body_parts + segment_of_frame[t]);
        latent_nodes.row(static_cast<Eigen::Index>(t * joints + j)) =
            (z.row(0) + z.row(part) + z.row(seg)) / 3.0;
      }
    }
    Matrix x = latent_nodes * map;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (Eigen::Index k = 0; k < x.cols(); ++k) x(r, k) += cfg.feature_noise * rng.normal();
    }
    return VisualFeatureMap{std::move(x), id, c};
  }
};

// Rotation by `angle` in the plane of orthonormal rows e1, e2, acting on rows.
Matrix plane_rotation(const RowVector& e1, const RowVector& e2, double angle) {
  const auto n = e1.size();
  Matrix r = Matrix::Identity(n, n);
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  // Row-vector convention: x' = x * r.
  r += (c - 1.0) * (e1.transpose() * e1 + e2.transpose() * e2);
  r += s * (e1.transpose() * e2 - e2.transpose() * e1);
  return r;
}

}  // namespace

void SynthConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::kInvalidArgument, "synth config: " + what);
  };
  require(classes >= 2, "need at least 2 classes");
  require(unseen_classes >= 1 && unseen_classes < classes, "unseen classes must be in [1, C)");
  require(anchor_dim >= 1 && feature_dim >= 1 && latent_dim >= 1, "dimensions must be positive");
  require(frames >= temporal_segments && temporal_segments >= 1,
          "frames must cover every temporal segment");
  require(body_parts == 4, "the 25-joint layout has 4 body parts");
  require(train_per_class >= 1 && test_per_class >= 1, "per-class counts must be positive");
  require(imbalance >= 1.0, "imbalance must be >= 1");
  require(anchor_separation >= 0.0 && granularity_spread >= 0.0 && sample_spread >= 0.0 &&
              feature_noise >= 0.0 && unseen_spread_scale >= 0.0 && min_angle >= 0.0,
          "noise and separation must be nonnegative");
  if (latent_dim + 1 > anchor_dim) {
    fail(ErrorKind::kInvalidArgument, "infeasible separation: latent_dim + 1 = " +
                                          std::to_string(latent_dim + 1) + " exceeds d = " +
                                          std::to_string(anchor_dim));
  }
}

SemanticAnchorSet SynthData::anchor_set() const {
  Matrix v = anchors;
  for (Eigen::Index r = 0; r < v.rows(); ++r) v.row(r) /= v.row(r).norm();
  return SemanticAnchorSet(std::move(v), class_ids, granularity_labels);
}

std::vector<VisualFeatureMap> SynthData::unseen_test() const {
  std::vector<VisualFeatureMap> out;
  for (const auto& s : test) {
    if (split.is_unseen(s.class_id)) out.push_back(s);
  }
  return out;
}

SynthData synth_build(const SynthConfig& cfg) {
  cfg.validate();
  Rng geo(substream_seed(cfg.seed, "synth/geometry"));
  Rng smp(substream_seed(cfg.seed, "synth/samples"));

  Generator gen{cfg, {}, {}, {}, {}, {}};
  const Matrix basis = orthonormal_rows(cfg.latent_dim + 1, cfg.anchor_dim, geo);
  const RowVector shared = basis.row(0);
  gen.latent = basis.bottomRows(static_cast<Eigen::Index>(cfg.latent_dim));

  // Class directions with a minimum pairwise angle, by sequential rejection.
  std::vector<RowVector> dirs;
  const double max_cos = std::cos(cfg.min_angle);
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < 20000 && !placed; ++attempt) {
      RowVector w = latent_direction(gen.latent, geo);
      placed = std::all_of(dirs.begin(), dirs.end(),
                           [&](const RowVector& o) { return w.dot(o) <= max_cos; });
      if (placed) dirs.push_back(w);
    }
    if (!placed) {
      fail(ErrorKind::kInvalidArgument,
           "infeasible separation: cannot place " + std::to_string(cfg.classes) +
               " class directions " + std::to_string(cfg.min_angle) + " rad apart in " +
               std::to_string(cfg.latent_dim) + " latent dimensions");
    }
  }

  const std::size_t gr = cfg.granularities();
  SynthData data;
  data.config = cfg;
  data.granularity_labels = make_granularity_labels(cfg.body_parts, cfg.temporal_segments);
  data.anchors.resize(static_cast<Eigen::Index>(cfg.classes * gr),
                      static_cast<Eigen::Index>(cfg.anchor_dim));
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    Matrix a(static_cast<Eigen::Index>(gr), static_cast<Eigen::Index>(cfg.anchor_dim));
    for (std::size_t g = 0; g < gr; ++g) {
      RowVector dir = dirs[c];
      if (g > 0) dir += cfg.granularity_spread * latent_direction(gen.latent, geo);
      RowVector v = shared + cfg.anchor_separation * dir;
      a.row(static_cast<Eigen::Index>(g)) = v / v.norm();
    }
    gen.class_anchors.push_back(a);
    data.class_ids.push_back(static_cast<ClassId>(c));
    data.anchors.middleRows(static_cast<Eigen::Index>(c * gr), static_cast<Eigen::Index>(gr)) =
        round_f32(a);
  }

  gen.map.resize(static_cast<Eigen::Index>(cfg.anchor_dim), static_cast<Eigen::Index>(cfg.feature_dim));
  for (Eigen::Index r = 0; r < gen.map.rows(); ++r) {
    for (Eigen::Index k = 0; k < gen.map.cols(); ++k) {
      gen.map(r, k) = geo.normal() / std::sqrt(static_cast<double>(cfg.feature_dim));
    }
  }
  const StaticPartition partition = StaticPartition::ntu25();
  gen.part_of_joint.assign(partition.joints, 0);
  for (std::size_t p = 0; p < partition.parts.size(); ++p) {
    for (std::size_t j : partition.parts[p]) gen.part_of_joint[j] = p;
  }
  const std::size_t per_seg = cfg.frames / cfg.temporal_segments;
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    gen.segment_of_frame.push_back(std::min(t / per_seg, cfg.temporal_segments - 1));
  }

  // Unseen classes: a seeded subset.
  std::vector<ClassId> ids = data.class_ids;
  geo.shuffle(ids);
  std::set<ClassId> unseen(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(cfg.unseen_classes));
  std::set<ClassId> seen(ids.begin() + static_cast<std::ptrdiff_t>(cfg.unseen_classes), ids.end());
  data.split = ClassSplit(seen, unseen);

  // Shift plane: the mean unseen feature direction and a random mixture of
  // the centered unseen class means.
  std::vector<RowVector> means;
  RowVector center = RowVector::Zero(static_cast<Eigen::Index>(cfg.feature_dim));
  for (ClassId c : unseen) {
    means.push_back(gen.class_anchors[static_cast<std::size_t>(c)].row(0) * gen.map);
    center += means.back() / static_cast<double>(unseen.size());
  }
  RowVector e1 = center / center.norm();
  RowVector e2 = RowVector::Zero(e1.size());
  for (const auto& m : means) e2 += geo.normal() * (m - center);
  e2 -= e2.dot(e1) * e1;
  if (e2.norm() < 1e-9) {
    e2 = gaussian_row(cfg.feature_dim, geo);
    e2 -= e2.dot(e1) * e1;
  }
  e2 /= e2.norm();
  const Matrix rotation = plane_rotation(e1, e2, cfg.shift_angle);

  auto make = [&](const char* subset, ClassId c, std::size_t k) {
    const bool is_unseen = data.split.is_unseen(c);
    const double spread = cfg.sample_spread * (is_unseen ? cfg.unseen_spread_scale : 1.0);
    VisualFeatureMap s = gen.sample(c, sample_name(subset, c, k), spread, smp);
    if (is_unseen && cfg.shift_angle != 0.0) s.values = s.values * rotation;
    s.values = round_f32(std::move(s.values));
    return s;
  };

  for (ClassId c : seen) {
    for (std::size_t k = 0; k < cfg.train_per_class; ++k) data.train.push_back(make("train", c, k));
  }
  for (ClassId c : data.class_ids) {
    for (std::size_t k = 0; k < cfg.val_per_class; ++k) data.val.push_back(make("val", c, k));
  }
  // Unseen test counts fall geometrically from test_per_class to
  // test_per_class / imbalance, in a seeded class order.
  std::vector<ClassId> unseen_order(unseen.begin(), unseen.end());
  geo.shuffle(unseen_order);
  for (std::size_t r = 0; r < unseen_order.size(); ++r) {
    const double frac = unseen_order.size() == 1
                            ? 0.0
                            : static_cast<double>(r) / static_cast<double>(unseen_order.size() - 1);
    const auto count = static_cast<std::size_t>(std::max(
        1.0, std::round(static_cast<double>(cfg.test_per_class) * std::pow(cfg.imbalance, -frac))));
    for (std::size_t k = 0; k < count; ++k) data.test.push_back(make("test", unseen_order[r], k));
  }
  for (ClassId c : seen) {
    for (std::size_t k = 0; k < cfg.seen_test_per_class; ++k) data.test.push_back(make("test", c, k));
  }
  Rng order(substream_seed(cfg.seed, "synth/order"));
  order.shuffle(data.train);
  order.shuffle(data.val);
  order.shuffle(data.test);
  return data;
}

SynthPaths synth_generate(const SynthConfig& cfg, const std::filesystem::path& dir) {
  const SynthData data = synth_build(cfg);
  std::filesystem::create_directories(dir / "features");
  const std::size_t gr = cfg.granularities();
  save_tensor(Tensor({cfg.classes, gr, cfg.anchor_dim},
                     std::vector<double>(data.anchors.data(), data.anchors.data() + data.anchors.size()),
                     DType::kFloat32),
              dir / "anchors.dpt");

  DatasetManifest base;
  for (ClassId c : data.class_ids) {
    ClassRecord rec;
    rec.id = c;
    char name[32];
    std::snprintf(name, sizeof name, "synthetic action %d", c);
    rec.name = name;
    for (const auto& label : data.granularity_labels) rec.descriptions.push_back(rec.name + ", " + label);
    base.classes.push_back(std::move(rec));
  }
  base.split = data.split;
  base.granularity_labels = data.granularity_labels;
  base.anchors = dir / "anchors.dpt";
  base.dims = DatasetDims{cfg.classes, gr, cfg.anchor_dim, cfg.nodes(), cfg.feature_dim};

  auto write_subset = [&](const std::vector<VisualFeatureMap>& samples, const char* file) {
    DatasetManifest m = base;
    for (const auto& s : samples) {
      const auto path = dir / "features" / (s.sample_id + ".dpt");
      save_tensor(to_tensor(s.values, DType::kFloat32), path);
      m.samples.push_back(SampleRecord{s.sample_id, s.class_id, path});
    }
    const auto manifest_path = dir / file;
    save_manifest(m, manifest_path);
    return manifest_path;
  };
  SynthPaths paths;
  paths.train = write_subset(data.train, "train.json");
  paths.val = write_subset(data.val, "val.json");
  paths.test = write_subset(data.test, "test.json");
  return paths;
}

std::vector<SynthConfig> synth_presets() {
  std::vector<SynthConfig> out;
  SynthConfig easy;
  easy.name = "easy";
  easy.sample_spread = 0.25;
  easy.feature_noise = 0.2;
  out.push_back(easy);

  SynthConfig shifted;
  shifted.name = "shifted";
  shifted.shift_angle = std::numbers::pi / 5.0;
  out.push_back(shifted);

  SynthConfig imbalanced;
  imbalanced.name = "imbalanced";
  imbalanced.sample_spread = 0.45;
  imbalanced.anchor_separation = 0.6;
  imbalanced.shift_angle = 0.3;
  imbalanced.test_per_class = 200;
  imbalanced.imbalance = 10.0;
  out.push_back(imbalanced);

  SynthConfig gzsl;
  gzsl.name = "gzsl";
  gzsl.unseen_spread_scale = 2.0;
  gzsl.val_per_class = 20;
  out.push_back(gzsl);
  return out;
}

SynthConfig synth_preset(std::string_view name) {
  for (auto& p : synth_presets()) {
    if (p.name == name) return p;
  }
  fail(ErrorKind::kInvalidArgument, "unknown preset \"" + std::string(name) + "\"");
}

}  // namespace zsr
