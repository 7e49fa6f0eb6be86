#include "run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "zsr/error.hpp"

namespace zsr::cli {
namespace {

using nlohmann::json;

// Reads fields from one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw UsageError("config: \"" + path_ + "\" must be an object");
  }
  // Call after the last get(); throws on keys that were never requested.
  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) {
        throw UsageError("config: unknown key \"" + (path_.empty() ? k : path_ + "." + k) + "\"");
      }
    }
  }

  template <typename T>
  bool get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return false;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw UsageError("config: bad value for \"" + name(key) + "\"");
    }
    return true;
  }

  template <typename T>
  bool get(const char* key, std::optional<T>& out) {
    const auto it = j_.find(key);
    if (it != j_.end() && it->is_null()) {
      seen_.insert(key);
      out.reset();
      return true;
    }
    T v{};
    if (!get(key, v)) return false;
    out = v;
    return true;
  }

  template <typename Fn>
  bool parse_enum(const char* key, Fn&& fn) {
    std::string text;
    if (!get(key, text)) return false;
    try {
      fn(text);
    } catch (const Error& e) {
      throw UsageError("config: " + name(key) + ": " + e.what());
    }
    return true;
  }

  bool path(const char* key, std::filesystem::path& out, const std::filesystem::path& base) {
    std::string text;
    if (!get(key, text)) return false;
    const std::filesystem::path p(text);
    out = p.is_absolute() ? p : base / p;
    return true;
  }

  const json* child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string name(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_train(const json& j, TrainConfig& t) {
  Section s(j, "train");
  s.get("learning_rate", t.learning_rate);
  s.get("batch_size", t.batch_size);
  s.get("max_epochs", t.max_epochs);
  s.get("patience", t.patience);
  s.get("validation_fraction", t.validation_fraction);
  s.get("temperature", t.temperature);
  s.get("hidden", t.hidden);
  s.get("mlp_hidden", t.mlp_hidden);
  s.parse_enum("partition", [&](const std::string& v) { t.mode = parse_partition_mode(v); });
  if (const json* p = s.child("static_partition")) {
    Section ps(*p, "train.static_partition");
    ps.get("joints", t.partition.joints);
    ps.get("parts", t.partition.parts);
    ps.get("temporal_segments", t.partition.temporal_segments);
    ps.finish();
  }
  s.finish();
}

void read_stream(const json& j, StreamConfig& st) {
  Section s(j, "stream");
  s.parse_enum("protocol", [&](const std::string& v) { st.protocol = parse_protocol(v); });
  s.parse_enum("tta", [&](const std::string& v) { st.tta = parse_tta_mode(v); });
  s.get("bank_capacity", st.bank_capacity);
  s.get("conf_threshold", st.conf_threshold);
  s.get("b_min", st.b_min);
  s.get("refine_rate", st.refine_rate);
  s.parse_enum("schedule", [&](const std::string& v) { st.schedule = parse_schedule_kind(v); });
  s.get("horizon", st.horizon);
  s.parse_enum("optimizer", [&](const std::string& v) { st.optimizer = parse_optimizer_kind(v); });
  s.get("adapt_batch", st.adapt_batch);
  s.get("steps_per_sample", st.steps_per_sample);
  s.get("gate_on_refined", st.gate_on_refined);
  s.get("seen_only_bank", st.seen_only_bank);
  s.finish();
}

void read_gate(const json& j, RunConfig& cfg) {
  Section s(j, "gate");
  if (s.get("delta", cfg.stream.delta)) cfg.calibrate = false;
  s.get("calibrate", cfg.calibrate);
  s.get("grid", cfg.gate.grid);
  s.get("quantiles", cfg.gate.quantiles);
  s.get("q_low", cfg.gate.q_low);
  s.get("q_high", cfg.gate.q_high);
  s.finish();
}

void read_synth(const json& j, RunConfig& cfg) {
  Section s(j, "synth");
  if (s.get("preset", cfg.synth_preset)) {
    cfg.synth = RunConfig::synth_preset_or_default(cfg.synth_preset);
  }
  SynthConfig& c = cfg.synth;
  s.get("classes", c.classes);
  s.get("unseen_classes", c.unseen_classes);
  s.get("anchor_dim", c.anchor_dim);
  s.get("feature_dim", c.feature_dim);
  s.get("latent_dim", c.latent_dim);
  s.get("frames", c.frames);
  s.get("train_per_class", c.train_per_class);
  s.get("val_per_class", c.val_per_class);
  s.get("test_per_class", c.test_per_class);
  s.get("seen_test_per_class", c.seen_test_per_class);
  s.get("imbalance", c.imbalance);
  s.get("anchor_separation", c.anchor_separation);
  s.get("min_angle", c.min_angle);
  s.get("granularity_spread", c.granularity_spread);
  s.get("sample_spread", c.sample_spread);
  s.get("feature_noise", c.feature_noise);
  s.get("shift_angle", c.shift_angle);
  s.get("unseen_spread_scale", c.unseen_spread_scale);
  s.finish();
}

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

SynthConfig RunConfig::synth_preset_or_default(const std::string& name) {
  try {
    return ::zsr::synth_preset(name);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  Section root(j, "");
  root.get("seed", cfg.seed);
  if (const json* p = root.child("paths")) {
    Section s(*p, "paths");
    s.path("train", cfg.paths.train, base_dir);
    s.path("val", cfg.paths.val, base_dir);
    s.path("test", cfg.paths.test, base_dir);
    s.path("params", cfg.paths.params, base_dir);
    s.finish();
  }
  if (const json* p = root.child("train")) read_train(*p, cfg.train);
  if (const json* p = root.child("stream")) read_stream(*p, cfg.stream);
  if (const json* p = root.child("gate")) read_gate(*p, cfg);
  if (const json* p = root.child("synth")) read_synth(*p, cfg);
  root.finish();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  json j;
  try {
    j = json::parse(buf.str());
  } catch (const json::exception&) {
    throw UsageError("config " + path.string() + ": malformed JSON");
  }
  return parse_run_config(j, path.parent_path());
}

json effective_config(const RunConfig& cfg) {
  const auto& t = cfg.train;
  const auto& s = cfg.stream;
  json j;
  j["seed"] = cfg.seed;
  j["train"] = {{"learning_rate", t.learning_rate},
                {"batch_size", t.batch_size},
                {"max_epochs", t.max_epochs},
                {"patience", t.patience},
                {"validation_fraction", t.validation_fraction},
                {"temperature", t.temperature},
                {"hidden", t.hidden},
                {"mlp_hidden", t.mlp_hidden},
                {"partition", partition_mode_name(t.mode)},
                {"static_partition",
                 {{"joints", t.partition.joints},
                  {"parts", t.partition.parts},
                  {"temporal_segments", t.partition.temporal_segments}}}};
  j["stream"] = {{"protocol", protocol_name(s.protocol)},
                 {"tta", tta_mode_name(s.tta)},
                 {"bank_capacity", s.bank_capacity},
                 {"conf_threshold", s.conf_threshold},
                 {"b_min", optional_json(s.b_min)},
                 {"refine_rate", s.refine_rate},
                 {"schedule", schedule_kind_name(s.schedule)},
                 {"horizon", optional_json(s.horizon)},
                 {"optimizer", optimizer_kind_name(s.optimizer)},
                 {"adapt_batch", optional_json(s.adapt_batch)},
                 {"steps_per_sample", s.steps_per_sample},
                 {"gate_on_refined", s.gate_on_refined},
                 {"seen_only_bank", s.seen_only_bank}};
  j["gate"] = {{"delta", s.delta},
               {"calibrate", cfg.calibrate},
               {"grid", cfg.gate.grid},
               {"quantiles", cfg.gate.quantiles},
               {"q_low", cfg.gate.q_low},
               {"q_high", cfg.gate.q_high}};
  return j;
}

json synthetic_run_config(std::uint64_t seed) {
  json j;
  j["seed"] = seed;
  j["paths"] = {{"train", "train.json"}, {"val", "val.json"}, {"test", "test.json"},
                {"params", "params"}};
  j["train"] = {{"learning_rate", 3e-3}, {"batch_size", 64}, {"max_epochs", 60},
                {"patience", 10},        {"hidden", 32},     {"mlp_hidden", 64}};
  j["stream"] = {{"refine_rate", 1e-3}};
  return j;
}

}  // namespace zsr::cli
