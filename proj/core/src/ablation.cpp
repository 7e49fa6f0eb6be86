#include "zsr/ablation.hpp"

#include <chrono>
#include <cstdio>

#include "zsr/random.hpp"

namespace zsr {
namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::vector<VisualFeatureMap> unseen_only(const std::vector<VisualFeatureMap>& samples,
                                          const ClassSplit& split) {
  std::vector<VisualFeatureMap> out;
  for (const auto& s : samples) {
    if (split.is_unseen(s.class_id)) out.push_back(s);
  }
  return out;
}

MetricsReport stream_report(const StreamResult& result, const ClassSplit& split,
                            Protocol protocol) {
  std::vector<ClassId> preds, labels;
  preds.reserve(result.records.size());
  labels.reserve(result.records.size());
  for (const auto& r : result.records) {
    preds.push_back(r.predicted);
    labels.push_back(r.true_class);
  }
  const std::vector<ClassId> order =
      protocol == Protocol::kZsl ? split.unseen_list() : split.all_list();
  MetricsReport rep = make_report(preds, labels, split, order);
  if (protocol == Protocol::kZsl) rep.gzsl = GzslScores{};
  return rep;
}

std::vector<AblationRow> run_ablation_suite(const ExperimentData& data, const AblationConfig& cfg) {
  const std::vector<VisualFeatureMap> zsl_stream = unseen_only(data.test, data.split);
  std::vector<AblationRow> rows;
  for (PartitionMode mode : {PartitionMode::kGlobal, PartitionMode::kStatic, PartitionMode::kAdaptive}) {
    TrainConfig tc = cfg.train;
    tc.mode = mode;
    const TrainResult trained = train(data.train, data.anchors, data.split, tc);
    const SemanticAnchorSet anchors = anchors_for_mode(data.anchors, mode);
    double delta = cfg.stream.delta;
    if (cfg.calibrate) delta = calibrate_delta(data.val, anchors, trained.params, data.split, cfg.gate).delta;

    for (TtaMode tta : {TtaMode::kOff, TtaMode::kNoBank, TtaMode::kFull}) {
      for (Protocol protocol : {Protocol::kZsl, Protocol::kGzsl}) {
        StreamConfig sc = cfg.stream;
        sc.tta = tta;
        sc.protocol = protocol;
        sc.delta = delta;
        const auto& stream = protocol == Protocol::kZsl ? zsl_stream : data.test;
        const auto start = std::chrono::steady_clock::now();
        const StreamResult res = run_stream(stream, anchors, trained.params, data.split, sc);
        const auto stop = std::chrono::steady_clock::now();

        AblationRow row;
        row.mode = mode;
        row.tta = tta;
        row.protocol = protocol;
        row.seed = cfg.train.seed;
        row.delta = delta;
        row.report = stream_report(res, data.split, protocol);
        const std::string key = cfg.fingerprint + "|" + partition_mode_name(mode) + "|" +
                                tta_mode_name(tta) + "|" + protocol_name(protocol) + "|" +
                                std::to_string(row.seed);
        row.config_id = hex64(fnv1a64(key));
        if (cfg.timing) {
          row.runtime_ms = std::chrono::duration<double, std::milli>(stop - start).count();
        }
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "config_id,partition_mode,tta_mode,protocol,top1,S,U,H,seed,runtime_ms\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_accuracy(*v) : std::string(); };
  for (const auto& r : rows) {
    out += r.config_id + "," + partition_mode_name(r.mode) + "," + tta_mode_name(r.tta) + "," +
           protocol_name(r.protocol) + "," + format_accuracy(r.report.top1) + "," +
           opt(r.report.gzsl.seen) + "," + opt(r.report.gzsl.unseen) + "," +
           opt(r.report.gzsl.harmonic) + "," + std::to_string(r.seed) + ",";
    if (r.runtime_ms) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", *r.runtime_ms);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace zsr
