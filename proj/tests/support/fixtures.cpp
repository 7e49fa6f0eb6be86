#include "fixtures.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <limits>
#include <sstream>

#include <unistd.h>

namespace zsr::testing {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * scale;
  return m;
}

double relu_margin(const std::vector<VisualFeatureMap>& samples, const std::vector<Matrix>& queries,
                   const AlignmentParams& params) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& s : samples) {
    for (const auto& q : queries) {
      m = std::min(m, fuse_forward(q, s.values, params).pre_hidden.cwiseAbs().minCoeff());
    }
  }
  return m;
}

std::vector<Matrix> class_queries(const SemanticAnchorSet& anchors) {
  std::vector<Matrix> out;
  for (std::size_t c = 0; c < anchors.class_count(); ++c) out.push_back(anchors.class_block(c));
  return out;
}

Matrix mean_global_query(const SemanticAnchorSet& anchors, std::span<const ClassId> classes) {
  Matrix q = Matrix::Zero(1, static_cast<Eigen::Index>(anchors.dim()));
  for (ClassId c : classes) q.row(0) += anchors.anchor(anchors.class_index(c), 0);
  return q / static_cast<double>(classes.size());
}

SemanticAnchorSet random_anchors(std::size_t classes, std::size_t body_parts, std::size_t segments,
                                 std::size_t d, Rng& rng, ClassId first_id) {
  const auto labels = make_granularity_labels(body_parts, segments);
  Matrix v = random_matrix(static_cast<Eigen::Index>(classes * labels.size()),
                           static_cast<Eigen::Index>(d), rng);
  v.rowwise().normalize();
  std::vector<ClassId> ids;
  for (std::size_t c = 0; c < classes; ++c) ids.push_back(first_id + static_cast<ClassId>(c));
  return SemanticAnchorSet(std::move(v), std::move(ids), labels);
}

InstanceShape random_shape(Rng& rng) {
  InstanceShape s;
  s.d = 2 + rng.index(7);
  s.n = 2 + rng.index(7);
  s.nodes = 2 + rng.index(9);
  s.h = 1 + rng.index(6);
  s.mlp = 2 + rng.index(7);
  s.classes = 3 + rng.index(3);
  s.unseen = 1 + rng.index(s.classes - 2);
  s.body_parts = rng.index(3);
  s.segments = rng.index(2);
  s.samples_per_class = 1 + rng.index(2);
  return s;
}

Instance make_instance(const InstanceShape& shape, std::uint64_t seed) {
  Rng rng(seed);
  std::size_t parts = shape.body_parts;
  std::size_t segments = shape.segments;
  if (shape.mode == PartitionMode::kGlobal) parts = segments = 0;

  std::set<ClassId> seen, unseen;
  for (std::size_t c = 0; c < shape.classes; ++c) {
    (c < shape.classes - shape.unseen ? seen : unseen).insert(static_cast<ClassId>(c));
  }

  StaticPartition partition;
  std::size_t nodes = shape.nodes;
  if (shape.mode == PartitionMode::kStatic) {
    // One joint per body part plus a spare, frames enough for the segments.
    partition.joints = std::max<std::size_t>(parts, 1);
    partition.parts.clear();
    for (std::size_t p = 0; p < parts; ++p) partition.parts.push_back({p});
    partition.temporal_segments = std::max<std::size_t>(segments, 1);
    if (parts == 0) partition.parts.push_back({0});
    parts = partition.parts.size();
    segments = partition.temporal_segments;
    const std::size_t frames = std::max<std::size_t>(segments, nodes / partition.joints);
    nodes = frames * partition.joints;
  }

  Instance inst{random_anchors(shape.classes, parts, segments, shape.d, rng),
                ClassSplit(seen, unseen),
                {},
                {},
                {}};
  AlignmentDims dims{shape.d, shape.n, shape.h, shape.mlp, inst.anchors.granularity_count()};
  inst.params = AlignmentParams::init(dims, rng.next_u64());
  for (Eigen::Index j = 0; j < inst.params.alpha_raw.size(); ++j) {
    inst.params.alpha_raw(j) = rng.normal();
  }
  for (Eigen::Index j = 0; j < inst.params.b2.size(); ++j) inst.params.b2(j) = 0.1 * rng.normal();
  inst.params.temperature = 0.2 + rng.uniform();
  inst.params.mode = shape.mode;
  if (shape.mode == PartitionMode::kStatic) inst.params.partition = partition;

  for (std::size_t c = 0; c < shape.classes; ++c) {
    for (std::size_t k = 0; k < shape.samples_per_class; ++k) {
      VisualFeatureMap f;
      f.values = random_matrix(static_cast<Eigen::Index>(nodes), static_cast<Eigen::Index>(shape.n), rng);
      f.class_id = static_cast<ClassId>(c);
      f.sample_id = "s" + std::to_string(c) + "_" + std::to_string(k);
      (inst.split.is_seen(f.class_id) ? inst.seen_samples : inst.unseen_samples).push_back(std::move(f));
    }
  }
  return inst;
}

DatasetManifest tiny_manifest(const std::filesystem::path& dir, const TinyDataset& spec) {
  DatasetManifest m;
  m.granularity_labels = make_granularity_labels(spec.body_parts, spec.segments);
  m.dims = {spec.classes, m.granularity_labels.size(), spec.d, spec.nodes, spec.n};
  std::set<ClassId> seen, unseen;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    ClassRecord rec;
    rec.id = static_cast<ClassId>(c);
    rec.name = "class" + std::to_string(c);
    for (const auto& g : m.granularity_labels) rec.descriptions.push_back(rec.name + " " + g);
    m.classes.push_back(rec);
    (c < spec.seen ? seen : unseen).insert(rec.id);
    for (std::size_t k = 0; k < spec.samples_per_class; ++k) {
      const std::string id = "c" + std::to_string(c) + "_" + std::to_string(k);
      m.samples.push_back({id, rec.id, dir / "features" / (id + ".dpt")});
    }
  }
  m.split = ClassSplit(seen, unseen);
  m.anchors = dir / "anchors.dpt";
  return m;
}

std::filesystem::path write_tiny_dataset(const std::filesystem::path& dir, const TinyDataset& spec) {
  Rng rng(spec.seed);
  const DatasetManifest m = tiny_manifest(dir, spec);
  std::filesystem::create_directories(dir / "features");
  std::vector<double> anchors(spec.classes * m.dims.granularities * spec.d);
  for (double& v : anchors) v = rng.normal();
  save_tensor(Tensor({spec.classes, m.dims.granularities, spec.d}, anchors, DType::kFloat32),
              m.anchors);
  for (const auto& s : m.samples) {
    std::vector<double> f(spec.nodes * spec.n);
    for (double& v : f) v = rng.normal();
    save_tensor(Tensor({spec.nodes, spec.n}, f, DType::kFloat32), s.features);
  }
  const auto path = dir / "manifest.json";
  save_manifest(m, path);
  return path;
}

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("zsr_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::vector<std::string> list_files(const std::filesystem::path& root) {
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.push_back(std::filesystem::relative(e.path(), root).string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace zsr::testing
