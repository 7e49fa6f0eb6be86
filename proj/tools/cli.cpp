#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>

#include <CLI11.hpp>
#include <json.hpp>

#include "run_config.hpp"
#include "zsr/ablation.hpp"
#include "zsr/dataset.hpp"
#include "zsr/error.hpp"
#include "zsr/metrics.hpp"
#include "zsr/synth.hpp"
#include "zsr/tensor.hpp"

namespace zsr::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct OverwriteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void prepare_out(const fs::path& dir, bool force) {
  if (dir.empty()) throw UsageError("--out is required");
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw OverwriteError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force) {
      throw OverwriteError(dir.string() + " is not empty (use --force to overwrite)");
    }
  }
  fs::create_directories(dir);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::kIo, "cannot write " + path.string());
  f << text;
  if (!f) fail(ErrorKind::kIo, "write failed: " + path.string());
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

RunConfig base_config(const std::string& config_path) {
  return config_path.empty() ? RunConfig{} : load_run_config(config_path);
}

const fs::path& require_path(const fs::path& p, const char* what) {
  if (p.empty()) throw UsageError(std::string("no ") + what + " manifest (set it in the config or by flag)");
  return p;
}

struct LoadedSplit {
  DatasetManifest manifest;
  SemanticAnchorSet anchors;
  std::vector<VisualFeatureMap> samples;
};

LoadedSplit load_split(const fs::path& manifest_path, bool seen_only = false) {
  ValidatedDataset ds = validate_dataset(load_manifest(manifest_path));
  const auto& m = ds.manifest();
  const auto idx = ds.select([&](ClassId c) { return !seen_only || m.split.is_seen(c); });
  return {m, assemble_anchor_set(ds.raw_anchors(), m), ds.load_samples(idx)};
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json report_json(const MetricsReport& rep, Protocol protocol) {
  json j;
  j["n_samples"] = rep.n_samples;
  j["top1"] = rep.top1;
  if (protocol == Protocol::kGzsl) {
    j["S"] = optional_json(rep.gzsl.seen);
    j["U"] = optional_json(rep.gzsl.unseen);
    j["H"] = optional_json(rep.gzsl.harmonic);
  }
  json per_class = json::object();
  for (const auto& [c, acc] : rep.per_class_acc) per_class[std::to_string(c)] = acc;
  j["per_class_accuracy"] = per_class;
  j["min_class_accuracy"] = rep.min_class_accuracy();
  j["confusion"] = {{"classes", rep.confusion.classes}, {"counts", rep.confusion.counts}};
  return j;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string config;
  std::string preset = "shifted";
  std::uint64_t seed = 0;
  std::string out;
  bool force = false;
  bool list = false;
};

int cmd_synth(const SynthArgs& a, CLI::App& sub, std::ostream& out) {
  if (a.list) {
    for (const auto& p : synth_presets()) {
      out << p.name << "  classes=" << p.classes << " unseen=" << p.unseen_classes
          << " d=" << p.anchor_dim << " n=" << p.feature_dim << " shift=" << fmt("%.4g", p.shift_angle)
          << " imbalance=" << fmt("%.4g", p.imbalance) << '\n';
    }
    return kExitOk;
  }
  RunConfig cfg = base_config(a.config);
  if (sub.count("--preset") || a.config.empty()) {
    cfg.synth_preset = a.preset;
    cfg.synth = RunConfig::synth_preset_or_default(a.preset);
  }
  if (sub.count("--seed")) cfg.seed = a.seed;
  cfg.synth.seed = cfg.seed;
  prepare_out(a.out, a.force);

  const SynthPaths paths = synth_generate(cfg.synth, a.out);
  json conf = synthetic_run_config(cfg.seed);
  conf["synth"] = {{"preset", cfg.synth_preset}};
  write_text(fs::path(a.out) / "config.json", conf.dump(2) + "\n");
  out << paths.train.string() << '\n' << paths.val.string() << '\n' << paths.test.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::uint64_t seed = 0;
  std::string partition = "adaptive";
  std::size_t max_epochs = 300;
  bool force = false;
};

int cmd_train(const TrainArgs& a, CLI::App& sub, std::ostream& out) {
  RunConfig cfg = base_config(a.config);
  if (sub.count("--seed")) cfg.seed = a.seed;
  if (sub.count("--partition")) {
    try {
      cfg.train.mode = parse_partition_mode(a.partition);
    } catch (const Error& e) {
      throw UsageError(std::string("--partition: ") + e.what());
    }
  }
  if (sub.count("--max-epochs")) cfg.train.max_epochs = a.max_epochs;
  if (!a.data.empty()) cfg.paths.train = a.data;
  if (!a.out.empty()) cfg.paths.params = a.out;
  cfg.train.seed = cfg.seed;
  require_path(cfg.paths.train, "training");
  if (cfg.paths.params.empty()) throw UsageError("--out is required");
  prepare_out(cfg.paths.params, a.force);

  const ValidatedDataset ds = validate_dataset(load_manifest(cfg.paths.train));
  const TrainResult res = train(ds, cfg.train);
  save_params(res.params, cfg.paths.params);

  json rep;
  rep["command"] = "train";
  rep["best_validation_accuracy"] = res.best_validation_accuracy;
  rep["best_epoch"] = res.best_epoch;
  rep["epochs_run"] = res.epochs_run;
  json hist = json::array();
  for (const auto& e : res.history) {
    hist.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss},
                    {"validation_accuracy", e.validation_accuracy}});
  }
  rep["history"] = hist;
  rep["effective_config"] = effective_config(cfg);
  write_text(cfg.paths.params / "train_report.json", rep.dump(2) + "\n");
  out << "validation top-1: " << format_accuracy(res.best_validation_accuracy) << " (epoch "
      << res.best_epoch << " of " << res.epochs_run << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------- run

struct RunArgs {
  std::string config;
  std::string data;
  std::string val;
  std::string params;
  std::string out;
  std::uint64_t seed = 0;
  std::string protocol = "zsl";
  std::string tta = "full";
  double conf_threshold = 0.1;
  std::size_t bank_capacity = 16;
  std::size_t bmin = 0;
  double delta = 1.0;
  bool force = false;
};

template <typename T, typename Fn>
T parse_flag(const char* flag, const std::string& text, Fn&& fn) {
  try {
    return fn(text);
  } catch (const Error& e) {
    throw UsageError(std::string(flag) + ": " + e.what());
  }
}

void apply_stream_flags(const RunArgs& a, CLI::App& sub, RunConfig& cfg) {
  if (sub.count("--seed")) cfg.seed = a.seed;
  if (sub.count("--protocol")) {
    cfg.stream.protocol = parse_flag<Protocol>("--protocol", a.protocol, parse_protocol);
  }
  if (sub.count("--tta")) cfg.stream.tta = parse_flag<TtaMode>("--tta", a.tta, parse_tta_mode);
  if (sub.count("--conf-threshold")) cfg.stream.conf_threshold = a.conf_threshold;
  if (sub.count("--bank-capacity")) cfg.stream.bank_capacity = a.bank_capacity;
  if (sub.count("--bmin")) cfg.stream.b_min = a.bmin;
  if (sub.count("--delta")) {
    cfg.stream.delta = a.delta;
    cfg.calibrate = false;
  }
  cfg.stream.seed = cfg.seed;
  cfg.train.seed = cfg.seed;
}

int cmd_run(const RunArgs& a, CLI::App& sub, std::ostream& out) {
  RunConfig cfg = base_config(a.config);
  apply_stream_flags(a, sub, cfg);
  if (!a.data.empty()) cfg.paths.test = a.data;
  if (!a.val.empty()) cfg.paths.val = a.val;
  if (!a.params.empty()) cfg.paths.params = a.params;
  require_path(cfg.paths.test, "test");
  if (cfg.paths.params.empty()) throw UsageError("no params directory (set it in the config or by --params)");
  prepare_out(a.out, a.force);

  const AlignmentParams params = load_params(cfg.paths.params);
  LoadedSplit test = load_split(cfg.paths.test);
  const ClassSplit& split = test.manifest.split;
  const SemanticAnchorSet anchors = anchors_for_mode(test.anchors, params.mode);
  const Protocol protocol = cfg.stream.protocol;

  std::vector<VisualFeatureMap> stream;
  if (protocol == Protocol::kZsl) {
    stream = unseen_only(test.samples, split);
    if (stream.empty()) fail(ErrorKind::kProtocol, "zsl run: test stream has no unseen-class samples");
  } else {
    if (split.unseen().empty()) fail(ErrorKind::kProtocol, "gzsl run: split has no unseen classes");
    stream = std::move(test.samples);
  }

  std::optional<Calibration> cal;
  if (protocol == Protocol::kGzsl && cfg.calibrate && !cfg.paths.val.empty()) {
    const LoadedSplit val = load_split(cfg.paths.val);
    cal = calibrate_delta(val.samples, anchors, params, split, cfg.gate);
    cfg.stream.delta = cal->delta;
  }

  const StreamResult res = run_stream(stream, anchors, params, split, cfg.stream);
  const MetricsReport rep = stream_report(res, split, protocol);

  json j = report_json(rep, protocol);
  j["command"] = "run";
  j["protocol"] = protocol_name(protocol);
  j["tta"] = tta_mode_name(cfg.stream.tta);
  if (protocol == Protocol::kGzsl) j["delta"] = cfg.stream.delta;
  j["adapt_steps"] = res.adapt_steps;
  j["mean_adapt_loss"] = res.mean_adapt_loss;
  json bank = json::object();
  for (const auto& [c, n] : res.bank_sizes) bank[std::to_string(c)] = n;
  j["bank_sizes"] = bank;
  j["effective_config"] = effective_config(cfg);
  const fs::path dir(a.out);
  write_text(dir / "report.json", j.dump(2) + "\n");

  std::string csv = "sample_id,true_class,predicted_class,confidence,entropy\n";
  for (const auto& r : res.records) {
    csv += r.sample_id + "," + std::to_string(r.true_class) + "," + std::to_string(r.predicted) +
           "," + fmt("%.6f", r.confidence) + "," + fmt("%.6f", r.entropy) + "\n";
  }
  write_text(dir / "predictions.csv", csv);
  if (cal) write_text(dir / "calibration.csv", calibration_csv(*cal));

  out << protocol_name(protocol) << " top-1: " << format_accuracy(rep.top1);
  if (rep.gzsl.harmonic) {
    out << "  S " << format_accuracy(*rep.gzsl.seen) << "  U " << format_accuracy(*rep.gzsl.unseen)
        << "  H " << format_accuracy(*rep.gzsl.harmonic);
  }
  out << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- ablate

struct AblateArgs {
  RunArgs run;
  bool timing = false;
};

int cmd_ablate(const AblateArgs& a, CLI::App& sub, std::ostream& out) {
  RunConfig cfg = base_config(a.run.config);
  apply_stream_flags(a.run, sub, cfg);
  prepare_out(a.run.out, a.run.force);

  LoadedSplit tr = load_split(require_path(cfg.paths.train, "training"), true);
  LoadedSplit te = load_split(require_path(cfg.paths.test, "test"));
  ExperimentData data{te.anchors, te.manifest.split, std::move(tr.samples), {}, std::move(te.samples)};
  if (!cfg.paths.val.empty()) data.val = load_split(cfg.paths.val).samples;

  AblationConfig ac;
  ac.train = cfg.train;
  ac.stream = cfg.stream;
  ac.gate = cfg.gate;
  ac.calibrate = cfg.calibrate && !data.val.empty();
  ac.timing = a.timing;
  ac.fingerprint = effective_config(cfg).dump();
  const auto rows = run_ablation_suite(data, ac);
  write_text(fs::path(a.run.out) / "ablation.csv", ablation_csv(rows));
  out << rows.size() << " rows written to " << (fs::path(a.run.out) / "ablation.csv").string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- inspect

int cmd_inspect(const std::string& path, std::ostream& out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::kIo, "cannot read " + path);
  char lead = 0;
  f >> std::ws;
  f.get(lead);
  f.close();

  if (lead == '{') {
    const DatasetManifest m = load_manifest(path);
    out << "manifest " << path << ": classes=" << m.classes.size()
        << " seen=" << m.split.seen().size() << " unseen=" << m.split.unseen().size()
        << " granularities=" << m.granularity_labels.size() << " samples=" << m.samples.size()
        << " d=" << m.dims.anchor_dim << " S=" << m.dims.nodes << " n=" << m.dims.feature_dim
        << '\n';
    return kExitOk;
  }
  const Tensor t = load_tensor(path);
  const auto d = t.data();
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
  out << path << ": " << dtype_name(t.dtype()) << " " << shape_string(t.shape()) << " min="
      << fmt("%.6g", *lo) << " max=" << fmt("%.6g", *hi) << " mean=" << fmt("%.6g", mean) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- wiring

void add_stream_options(CLI::App* sub, RunArgs& r) {
  sub->add_option("--config", r.config, "JSON run config");
  sub->add_option("--seed", r.seed, "seed for stream sampling and training")->capture_default_str();
  sub->add_option("--protocol", r.protocol, "zsl or gzsl")
      ->check(CLI::IsMember({"zsl", "gzsl"}))
      ->capture_default_str();
  sub->add_option("--tta", r.tta, "off, nobank or full")
      ->check(CLI::IsMember({"off", "nobank", "full"}))
      ->capture_default_str();
  sub->add_option("--conf-threshold", r.conf_threshold, "pseudo-label confidence threshold")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  sub->add_option("--bank-capacity", r.bank_capacity, "per-class memory bank capacity")
      ->capture_default_str();
  sub->add_option("--bmin", r.bmin, "minimum bank size before adapting (default: max(classes, 8))");
  sub->add_option("--delta", r.delta, "entropy gate threshold; disables calibration")
      ->capture_default_str();
  sub->add_option("--out", r.out, "output directory")->required();
  sub->add_flag("--force", r.force, "write into a non-empty output directory");
}

int exit_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kProtocol: return kExitProtocol;
    case ErrorKind::kDataCorruption: return kExitCorrupt;
    default: return kExitOther;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Zero-shot skeleton action recognition with test-time anchor refinement", "zsr"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "zsr 0.3.0");

  SynthArgs sa;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset tree");
  synth->add_option("--config", sa.config, "JSON run config (synth section)");
  synth->add_option("--preset", sa.preset, "preset name (see --list)")->capture_default_str();
  synth->add_option("--seed", sa.seed, "generator seed")->capture_default_str();
  synth->add_option("--out", sa.out, "output directory");
  synth->add_flag("--force", sa.force, "write into a non-empty output directory");
  synth->add_flag("--list", sa.list, "print the presets and exit");

  TrainArgs ta;
  CLI::App* trn = app.add_subcommand("train", "train alignment parameters on seen classes");
  trn->add_option("--config", ta.config, "JSON run config");
  trn->add_option("--data", ta.data, "training manifest (overrides paths.train)");
  trn->add_option("--out", ta.out, "parameter directory (overrides paths.params)");
  trn->add_option("--seed", ta.seed, "training seed")->capture_default_str();
  trn->add_option("--partition", ta.partition, "global, static or adaptive")
      ->check(CLI::IsMember({"global", "static", "adaptive"}))
      ->capture_default_str();
  trn->add_option("--max-epochs", ta.max_epochs, "epoch limit")->capture_default_str();
  trn->add_flag("--force", ta.force, "overwrite an existing parameter directory");

  RunArgs ra;
  CLI::App* run = app.add_subcommand("run", "stream the test split with optional refinement");
  add_stream_options(run, ra);
  run->add_option("--data", ra.data, "test manifest (overrides paths.test)");
  run->add_option("--val", ra.val, "calibration manifest for gzsl (overrides paths.val)");
  run->add_option("--params", ra.params, "parameter directory (overrides paths.params)");

  AblateArgs aa;
  CLI::App* ablate = app.add_subcommand("ablate", "partition x tta x protocol ablation grid");
  add_stream_options(ablate, aa.run);
  ablate->add_flag("--timing", aa.timing, "fill the runtime_ms column");

  std::string inspect_path;
  CLI::App* inspect = app.add_subcommand("inspect", "summarize a DPT1 tensor or a manifest");
  inspect->add_option("path", inspect_path, "file to inspect")->required();

  CLI::App* active = nullptr;
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(std::move(rev));
    if (synth->parsed()) {
      active = synth;
      return cmd_synth(sa, *synth, out);
    }
    if (trn->parsed()) {
      active = trn;
      return cmd_train(ta, *trn, out);
    }
    if (run->parsed()) {
      active = run;
      return cmd_run(ra, *run, out);
    }
    if (ablate->parsed()) {
      active = ablate;
      return cmd_ablate(aa, *ablate, out);
    }
    active = inspect;
    return cmd_inspect(inspect_path, out);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    if (active) err << active->help();
    return kExitUsage;
  } catch (const OverwriteError& e) {
    err << "error: " << e.what() << '\n';
    return kExitOverwrite;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitOther;
  }
}

}  // namespace zsr::cli
