#include "zsr/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "zsr/error.hpp"

namespace zsr {
namespace {

using nlohmann::json;

[[noreturn]] void bad_manifest(const std::string& what) {
  fail(ErrorKind::kDataCorruption, "manifest: " + what);
}

const json& require(const json& obj, const char* key) {
  if (!obj.is_object() || !obj.contains(key)) bad_manifest(std::string("missing key \"") + key + "\"");
  return obj.at(key);
}

std::size_t require_count(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_number_unsigned() || v.get<std::uint64_t>() == 0) {
    bad_manifest(std::string("\"") + key + "\" must be a positive integer");
  }
  return v.get<std::size_t>();
}

ClassId require_class_id(const json& v, const char* what) {
  if (!v.is_number_integer()) bad_manifest(std::string(what) + " must be an integer");
  return v.get<ClassId>();
}

std::set<ClassId> id_set(const json& arr, const char* what) {
  if (!arr.is_array()) bad_manifest(std::string(what) + " must be an array");
  std::set<ClassId> out;
  for (const json& v : arr) {
    if (!out.insert(require_class_id(v, what)).second) {
      bad_manifest(std::string("duplicate class id in ") + what);
    }
  }
  return out;
}

bool parse_index(std::string_view text, std::size_t& out) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

std::filesystem::path portable_relative(const std::filesystem::path& p,
                                        const std::filesystem::path& base) {
  const auto rel = p.lexically_relative(base);
  if (rel.empty() || *rel.begin() == "..") return p;
  return rel;
}

}  // namespace

ClassSplit::ClassSplit(std::set<ClassId> seen, std::set<ClassId> unseen)
    : seen_(std::move(seen)), unseen_(std::move(unseen)) {
  for (ClassId c : seen_) {
    if (unseen_.contains(c)) {
      fail(ErrorKind::kDataCorruption, "split overlap: class " + std::to_string(c));
    }
  }
  if (seen_.empty()) fail(ErrorKind::kDataCorruption, "split has no seen classes");
}

std::vector<ClassId> ClassSplit::all_list() const {
  std::vector<ClassId> out(seen_.begin(), seen_.end());
  out.insert(out.end(), unseen_.begin(), unseen_.end());
  std::sort(out.begin(), out.end());
  return out;
}

GranularityLayout parse_granularity_labels(const std::vector<std::string>& labels) {
  if (labels.empty() || labels.front() != "global") {
    bad_manifest("granularity labels must start with \"global\"");
  }
  GranularityLayout layout;
  for (std::size_t i = 1; i < labels.size(); ++i) {
    const std::string& label = labels[i];
    std::size_t k = 0;
    if (label.starts_with("bp_") && parse_index(std::string_view(label).substr(3), k)) {
      if (layout.temporal_segments != 0 || k != layout.body_parts + 1) {
        bad_manifest("body-part labels must be bp_1..bp_P before temporal labels, got \"" +
                     label + "\"");
      }
      ++layout.body_parts;
    } else if (label.starts_with("ti_") && parse_index(std::string_view(label).substr(3), k)) {
      if (k != layout.temporal_segments + 1) {
        bad_manifest("temporal labels must be ti_1..ti_Z, got \"" + label + "\"");
      }
      ++layout.temporal_segments;
    } else {
      bad_manifest("unknown granularity label \"" + label + "\"");
    }
  }
  return layout;
}

std::vector<std::string> make_granularity_labels(std::size_t body_parts,
                                                 std::size_t temporal_segments) {
  std::vector<std::string> labels{"global"};
  for (std::size_t p = 1; p <= body_parts; ++p) labels.push_back("bp_" + std::to_string(p));
  for (std::size_t z = 1; z <= temporal_segments; ++z) labels.push_back("ti_" + std::to_string(z));
  return labels;
}

std::vector<ClassId> DatasetManifest::class_ids() const {
  std::vector<ClassId> ids;
  ids.reserve(classes.size());
  for (const auto& c : classes) ids.push_back(c.id);
  return ids;
}

DatasetManifest parse_manifest(const std::string& json_text,
                               const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    bad_manifest(std::string("malformed JSON: ") + e.what());
  }
  if (!root.is_object()) bad_manifest("top level must be an object");

  DatasetManifest m;

  const json& dims = require(root, "dims");
  m.dims.classes = require_count(dims, "C");
  m.dims.granularities = require_count(dims, "Gr");
  m.dims.anchor_dim = require_count(dims, "d");
  m.dims.nodes = require_count(dims, "S");
  m.dims.feature_dim = require_count(dims, "n");

  const json& grans = require(root, "granularities");
  if (!grans.is_array()) bad_manifest("\"granularities\" must be an array");
  for (const json& g : grans) {
    if (!g.is_string()) bad_manifest("granularity labels must be strings");
    m.granularity_labels.push_back(g.get<std::string>());
  }
  const GranularityLayout layout = parse_granularity_labels(m.granularity_labels);
  if (layout.count() != m.dims.granularities) {
    bad_manifest("granularity count mismatch: " + std::to_string(layout.count()) +
                 " labels for Gr=" + std::to_string(m.dims.granularities));
  }

  const json& classes = require(root, "classes");
  if (!classes.is_array() || classes.empty()) bad_manifest("\"classes\" must be a non-empty array");
  std::set<ClassId> all_ids;
  for (const json& c : classes) {
    ClassRecord rec;
    rec.id = require_class_id(require(c, "id"), "class id");
    const json& name = require(c, "name");
    if (!name.is_string()) bad_manifest("class name must be a string");
    rec.name = name.get<std::string>();
    const json& desc = require(c, "descriptions");
    if (!desc.is_array()) bad_manifest("class descriptions must be an array");
    for (const json& d : desc) {
      if (!d.is_string()) bad_manifest("descriptions must be strings");
      rec.descriptions.push_back(d.get<std::string>());
    }
    if (rec.descriptions.size() != m.dims.granularities) {
      bad_manifest("granularity count mismatch: class " + std::to_string(rec.id) + " has " +
                   std::to_string(rec.descriptions.size()) + " descriptions for Gr=" +
                   std::to_string(m.dims.granularities));
    }
    if (!all_ids.insert(rec.id).second) {
      bad_manifest("duplicate class_id " + std::to_string(rec.id));
    }
    m.classes.push_back(std::move(rec));
  }
  if (m.classes.size() != m.dims.classes) {
    bad_manifest("dims.C=" + std::to_string(m.dims.classes) + " but " +
                 std::to_string(m.classes.size()) + " classes listed");
  }

  const json& split = require(root, "split");
  std::set<ClassId> seen = id_set(require(split, "seen"), "split.seen");
  std::set<ClassId> unseen = id_set(require(split, "unseen"), "split.unseen");
  for (ClassId c : seen) {
    if (unseen.contains(c)) bad_manifest("split overlap: class " + std::to_string(c));
  }
  if (seen.empty()) bad_manifest("split.seen is empty");
  std::set<ClassId> split_union = seen;
  split_union.insert(unseen.begin(), unseen.end());
  if (split_union != all_ids) bad_manifest("split does not cover exactly the listed classes");
  m.split = ClassSplit(std::move(seen), std::move(unseen));

  const json& anchors = require(root, "anchors");
  if (!anchors.is_string()) bad_manifest("\"anchors\" must be a path string");
  m.anchors = base_dir / anchors.get<std::string>();

  const json& samples = require(root, "samples");
  if (!samples.is_array()) bad_manifest("\"samples\" must be an array");
  std::set<std::string> sample_ids;
  for (const json& s : samples) {
    SampleRecord rec;
    const json& id = require(s, "id");
    if (!id.is_string()) bad_manifest("sample id must be a string");
    rec.id = id.get<std::string>();
    rec.class_id = require_class_id(require(s, "class"), "sample class");
    if (!m.split.contains(rec.class_id)) {
      bad_manifest("sample " + rec.id + " has class " + std::to_string(rec.class_id) +
                   " outside the split");
    }
    const json& f = require(s, "features");
    if (!f.is_string()) bad_manifest("sample features must be a path string");
    rec.features = base_dir / f.get<std::string>();
    if (!sample_ids.insert(rec.id).second) bad_manifest("duplicate sample id " + rec.id);
    m.samples.push_back(std::move(rec));
  }
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "file not found: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_manifest(buffer.str(), path.parent_path());
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  const auto base = path.parent_path();
  json root;
  json classes = json::array();
  for (const auto& c : m.classes) {
    classes.push_back({{"id", c.id}, {"name", c.name}, {"descriptions", c.descriptions}});
  }
  root["classes"] = std::move(classes);
  root["split"] = {{"seen", m.split.seen_list()}, {"unseen", m.split.unseen_list()}};
  root["granularities"] = m.granularity_labels;
  root["anchors"] = portable_relative(m.anchors, base).generic_string();
  json samples = json::array();
  for (const auto& s : m.samples) {
    samples.push_back({{"id", s.id},
                       {"class", s.class_id},
                       {"features", portable_relative(s.features, base).generic_string()}});
  }
  root["samples"] = std::move(samples);
  root["dims"] = {{"C", m.dims.classes},
                  {"Gr", m.dims.granularities},
                  {"d", m.dims.anchor_dim},
                  {"S", m.dims.nodes},
                  {"n", m.dims.feature_dim}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open for writing: " + path.string());
  out << root.dump(1) << '\n';
  if (!out) fail(ErrorKind::kIo, "write failed: " + path.string());
}

VisualFeatureMap ValidatedDataset::load_sample(std::size_t index) const {
  const SampleRecord& rec = manifest_.samples.at(index);
  Tensor t = load_tensor(rec.features);
  const std::vector<std::size_t> expected{manifest_.dims.nodes, manifest_.dims.feature_dim};
  if (t.shape() != expected) {
    fail(ErrorKind::kDataCorruption, rec.features.string() + ": expected shape " +
                                         shape_string(expected) + ", got " +
                                         shape_string(t.shape()));
  }
  return VisualFeatureMap{to_matrix(t), rec.id, rec.class_id};
}

std::vector<VisualFeatureMap> ValidatedDataset::load_samples(
    const std::vector<std::size_t>& indices) const {
  std::vector<VisualFeatureMap> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(load_sample(i));
  return out;
}

ValidatedDataset validate_dataset(DatasetManifest manifest) {
  const DatasetDims& dims = manifest.dims;
  Tensor anchors = load_tensor(manifest.anchors);
  const std::vector<std::size_t> anchor_shape{dims.classes, dims.granularities, dims.anchor_dim};
  if (anchors.shape() != anchor_shape) {
    fail(ErrorKind::kDataCorruption, manifest.anchors.string() + ": expected shape " +
                                         shape_string(anchor_shape) + ", got " +
                                         shape_string(anchors.shape()));
  }
  const std::vector<std::size_t> feature_shape{dims.nodes, dims.feature_dim};
  for (const SampleRecord& s : manifest.samples) {
    const TensorHeader header = read_tensor_header(s.features);
    if (header.shape != feature_shape) {
      fail(ErrorKind::kDataCorruption, s.features.string() + ": expected shape " +
                                           shape_string(feature_shape) + ", got " +
                                           shape_string(header.shape));
    }
  }
  return ValidatedDataset(std::move(manifest), std::move(anchors));
}

}  // namespace zsr
