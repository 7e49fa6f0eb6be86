#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "zsr/error.hpp"
#include "zsr/train.hpp"

namespace zsr {
namespace {

using nlohmann::json;

constexpr int kParamsFormat = 1;

Matrix load_matrix(const std::filesystem::path& p, Eigen::Index rows, Eigen::Index cols) {
  Matrix m = to_matrix(load_tensor(p));
  if (m.rows() != rows || m.cols() != cols) {
    fail(ErrorKind::kDataCorruption,
         "shape mismatch in " + p.string() + ": expected " + std::to_string(rows) + "x" +
             std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
             std::to_string(m.cols()));
  }
  return m;
}

Vector load_vec(const std::filesystem::path& p, Eigen::Index size) {
  Vector v = to_vector(load_tensor(p));
  if (v.size() != size) {
    fail(ErrorKind::kDataCorruption, "shape mismatch in " + p.string() + ": expected length " +
                                         std::to_string(size) + ", got " +
                                         std::to_string(v.size()));
  }
  return v;
}

}  // namespace

void save_params(const AlignmentParams& params, const std::filesystem::path& dir) {
  params.validate();
  std::filesystem::create_directories(dir);
  save_tensor(to_tensor(params.w_query), dir / "w_query.dpt");
  save_tensor(to_tensor(params.w_key), dir / "w_key.dpt");
  save_tensor(to_tensor(params.w1), dir / "w1.dpt");
  save_tensor(to_tensor(params.b1), dir / "b1.dpt");
  save_tensor(to_tensor(params.w2), dir / "w2.dpt");
  save_tensor(to_tensor(params.b2), dir / "b2.dpt");
  save_tensor(to_tensor(params.alpha_raw), dir / "alpha_raw.dpt");

  json j;
  j["format"] = kParamsFormat;
  j["mode"] = partition_mode_name(params.mode);
  j["temperature"] = params.temperature;
  j["dims"] = {{"d", params.anchor_dim()},
               {"n", params.feature_dim()},
               {"h", params.hidden()},
               {"mlp", params.mlp_hidden()},
               {"Gr", params.granularities()}};
  j["partition"] = {{"joints", params.partition.joints},
                    {"parts", params.partition.parts},
                    {"temporal_segments", params.partition.temporal_segments}};
  std::ofstream out(dir / "params.json", std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write " + (dir / "params.json").string());
  out << j.dump(2) << '\n';
}

AlignmentParams load_params(const std::filesystem::path& dir) {
  const auto meta_path = dir / "params.json";
  std::ifstream in(meta_path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "missing params: " + meta_path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  AlignmentParams p;
  try {
    const json j = json::parse(buf.str());
    if (j.at("format").get<int>() != kParamsFormat) {
      fail(ErrorKind::kDataCorruption, "unsupported params format in " + meta_path.string());
    }
    p.mode = parse_partition_mode(j.at("mode").get<std::string>());
    p.temperature = j.at("temperature").get<double>();
    const auto& dims = j.at("dims");
    const auto d = dims.at("d").get<Eigen::Index>();
    const auto n = dims.at("n").get<Eigen::Index>();
    const auto h = dims.at("h").get<Eigen::Index>();
    const auto hm = dims.at("mlp").get<Eigen::Index>();
    const auto gr = dims.at("Gr").get<Eigen::Index>();
    const auto& part = j.at("partition");
    p.partition.joints = part.at("joints").get<std::size_t>();
    p.partition.parts = part.at("parts").get<std::vector<std::vector<std::size_t>>>();
    p.partition.temporal_segments = part.at("temporal_segments").get<std::size_t>();
    p.w_query = load_matrix(dir / "w_query.dpt", d, h);
    p.w_key = load_matrix(dir / "w_key.dpt", n, h);
    p.w1 = load_matrix(dir / "w1.dpt", n, hm);
    p.b1 = load_vec(dir / "b1.dpt", hm);
    p.w2 = load_matrix(dir / "w2.dpt", hm, d);
    p.b2 = load_vec(dir / "b2.dpt", d);
    p.alpha_raw = load_vec(dir / "alpha_raw.dpt", gr);
  } catch (const json::exception& e) {
    fail(ErrorKind::kDataCorruption, "malformed params " + meta_path.string() + ": " + e.what());
  }
  p.validate();
  return p;
}

}  // namespace zsr
