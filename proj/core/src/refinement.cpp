#include "zsr/refinement.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "zsr/error.hpp"
#include "zsr/gzsl_gate.hpp"

namespace zsr {
namespace {

std::vector<std::size_t> indices_of(const SemanticAnchorSet& anchors,
                                    std::span<const ClassId> classes) {
  std::vector<std::size_t> out;
  out.reserve(classes.size());
  for (ClassId c : classes) {
    if (!anchors.has_class(c)) {
      fail(ErrorKind::kInvalidArgument, "class " + std::to_string(c) + " has no anchors");
    }
    out.push_back(anchors.class_index(c));
  }
  return out;
}

// Mean of the global anchor rows of the query classes (1 x d).
Matrix global_query(const SemanticAnchorSet& anchors, std::span<const std::size_t> idx) {
  if (idx.empty()) fail(ErrorKind::kInvalidArgument, "empty candidate set");
  Matrix q = Matrix::Zero(1, static_cast<Eigen::Index>(anchors.dim()));
  for (std::size_t c : idx) q.row(0) += anchors.anchor(c, 0);
  return q / static_cast<double>(idx.size());
}

double entropy_of(const RowVector& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) > 0.0) h -= p(i) * std::log(p(i));
  }
  return h;
}

}  // namespace

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  fail(ErrorKind::kInvalidArgument, "unknown optimizer \"" + std::string(name) + "\"");
}

const char* optimizer_kind_name(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd";
}

RefinementState RefinementState::identity(const SemanticAnchorSet& anchors, Schedule schedule,
                                          OptimizerKind optimizer) {
  const auto rows = anchors.values().rows();
  const auto cols = anchors.values().cols();
  RefinementState s;
  s.scale = Matrix::Ones(rows, cols);
  s.bias = Matrix::Zero(rows, cols);
  s.schedule = schedule;
  s.optimizer = optimizer;
  s.adam_scale = AdamState(rows, cols);
  s.adam_bias = AdamState(rows, cols);
  return s;
}

SemanticAnchorSet refine_anchors(const SemanticAnchorSet& anchors, const RefinementState& state) {
  const Matrix& f = anchors.values();
  if (state.scale.rows() != f.rows() || state.scale.cols() != f.cols() ||
      state.bias.rows() != f.rows() || state.bias.cols() != f.cols()) {
    fail(ErrorKind::kInvalidArgument, "refinement state does not match the anchor set shape");
  }
  Matrix u = state.scale.cwiseProduct(f) + state.bias;
  const std::size_t gr = anchors.granularity_count();
  for (Eigen::Index r = 0; r < u.rows(); ++r) {
    const double norm = u.row(r).norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      const auto c = static_cast<std::size_t>(r) / gr;
      const auto g = static_cast<std::size_t>(r) % gr;
      fail(ErrorKind::kNumeric, "refined anchor has zero norm at class " +
                                    std::to_string(anchors.class_ids()[c]) + ", granularity " +
                                    anchors.granularity_labels()[g]);
    }
    u.row(r) /= norm;
  }
  return SemanticAnchorSet(std::move(u), anchors.class_ids(), anchors.granularity_labels());
}

Prediction make_prediction(std::vector<ClassId> classes, const RowVector& logits) {
  if (classes.empty() || static_cast<Eigen::Index>(classes.size()) != logits.size()) {
    fail(ErrorKind::kInvalidArgument, "prediction needs one logit per candidate class");
  }
  Prediction p;
  p.classes = std::move(classes);
  p.probs = softmax(logits);
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < p.probs.size(); ++i) {
    const double a = p.probs(i);
    const double b = p.probs(best);
    if (a > b || (a == b && p.classes[static_cast<std::size_t>(i)] <
                                p.classes[static_cast<std::size_t>(best)])) {
      best = i;
    }
  }
  p.label = p.classes[static_cast<std::size_t>(best)];
  p.confidence = p.probs(best);
  p.entropy = entropy_of(p.probs);
  return p;
}

GlobalScores score_global(const VisualFeatureMap& features, const SemanticAnchorSet& refined,
                          const AlignmentParams& params,
                          std::span<const std::size_t> query_class_indices) {
  const Matrix q = global_query(refined, query_class_indices);
  const FusionTrace t = fuse_forward(q, features.values, params, nullptr, true);
  GlobalScores s;
  s.projected = t.projected.row(0);
  s.cosines.resize(static_cast<Eigen::Index>(refined.class_count()));
  for (std::size_t c = 0; c < refined.class_count(); ++c) {
    s.cosines(static_cast<Eigen::Index>(c)) = s.projected.dot(refined.anchor(c, 0));
  }
  return s;
}

Prediction predict(const VisualFeatureMap& features, const SemanticAnchorSet& refined,
                   const AlignmentParams& params, std::span<const ClassId> candidates,
                   std::span<const ClassId> query_classes) {
  std::vector<ClassId> cands(candidates.begin(), candidates.end());
  std::sort(cands.begin(), cands.end());
  if (std::adjacent_find(cands.begin(), cands.end()) != cands.end()) {
    fail(ErrorKind::kInvalidArgument, "duplicate candidate class");
  }
  const auto cand_idx = indices_of(refined, cands);
  const auto query_idx = query_classes.empty() ? cand_idx : indices_of(refined, query_classes);
  const GlobalScores s = score_global(features, refined, params, query_idx);
  RowVector logits(static_cast<Eigen::Index>(cands.size()));
  for (std::size_t k = 0; k < cands.size(); ++k) {
    logits(static_cast<Eigen::Index>(k)) =
        s.cosines(static_cast<Eigen::Index>(cand_idx[k])) / params.temperature;
  }
  return make_prediction(std::move(cands), logits);
}

// ---------------------------------------------------------------------------

MemoryBank::MemoryBank(std::size_t capacity_per_class, double confidence_threshold)
    : capacity_(capacity_per_class), threshold_(confidence_threshold) {
  if (capacity_ == 0) fail(ErrorKind::kInvalidArgument, "bank capacity must be positive");
  if (!(threshold_ >= 0.0 && threshold_ <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "confidence threshold must be in [0, 1]");
  }
}

std::optional<std::uint64_t> MemoryBank::insert(BankEntry entry) {
  if (!(entry.confidence > threshold_)) {
    fail(ErrorKind::kInvalidArgument, "bank entry confidence " + std::to_string(entry.confidence) +
                                          " does not exceed the threshold");
  }
  entry.insertion_index = next_index_++;
  auto& store = stores_[entry.pseudo_label];
  store.push_back(std::move(entry));
  ++total_;
  if (store.size() <= capacity_) return std::nullopt;
  auto victim = store.begin();
  for (auto it = store.begin(); it != store.end(); ++it) {
    if (it->confidence < victim->confidence ||
        (it->confidence == victim->confidence && it->insertion_index < victim->insertion_index)) {
      victim = it;
    }
  }
  const std::uint64_t evicted = victim->insertion_index;
  store.erase(victim);
  --total_;
  return evicted;
}

std::size_t MemoryBank::class_size(ClassId c) const {
  const auto it = stores_.find(c);
  return it == stores_.end() ? 0 : it->second.size();
}

std::vector<BankEntry> MemoryBank::sample_balanced(std::size_t batch_size, Rng& rng) const {
  if (total_ == 0) fail(ErrorKind::kInvalidArgument, "cannot sample from an empty bank");
  std::vector<std::vector<std::size_t>> remaining;
  std::vector<const std::vector<BankEntry>*> stores;
  for (const auto& [c, store] : stores_) {
    if (store.empty()) continue;
    std::vector<std::size_t> idx(store.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    remaining.push_back(std::move(idx));
    stores.push_back(&store);
  }
  std::vector<BankEntry> out;
  const std::size_t want = std::min(batch_size, total_);
  out.reserve(want);
  while (out.size() < want) {
    for (std::size_t k = 0; k < stores.size() && out.size() < want; ++k) {
      auto& idx = remaining[k];
      if (idx.empty()) continue;
      const std::size_t pick = rng.index(idx.size());
      out.push_back((*stores[k])[idx[pick]]);
      idx[pick] = idx.back();
      idx.pop_back();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

const std::vector<ClassId>& CandidateSets::for_route(Route r) const {
  switch (r) {
    case Route::kSeen:
      return seen;
    case Route::kUnseen:
      return unseen;
    case Route::kAll:
      break;
  }
  return all;
}

AdaptResult adaptation_loss(std::span<const BankEntry> batch, const SemanticAnchorSet& anchors,
                            const RefinementState& state, const AlignmentParams& params,
                            const CandidateSets& candidates) {
  if (batch.empty()) fail(ErrorKind::kInvalidArgument, "empty adaptation batch");
  const Matrix& f = anchors.values();
  Matrix u = state.scale.cwiseProduct(f) + state.bias;
  Vector norms = u.rowwise().norm();
  const SemanticAnchorSet refined = refine_anchors(anchors, state);
  const Matrix& fr = refined.values();
  const std::size_t gr = anchors.granularity_count();
  const auto query_idx = indices_of(anchors, candidates.all);
  const Matrix q = global_query(refined, query_idx);
  const double inv_tau = 1.0 / params.temperature;
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  Matrix d_refined = Matrix::Zero(fr.rows(), fr.cols());
  RowVector d_query = RowVector::Zero(fr.cols());
  AdaptResult res;
  for (const BankEntry& e : batch) {
    if (!e.features) fail(ErrorKind::kInvalidArgument, "bank entry without features");
    const auto& cands = candidates.for_route(e.route);
    const auto cand_idx = indices_of(anchors, cands);
    const auto pos = std::find(cands.begin(), cands.end(), e.pseudo_label);
    if (pos == cands.end()) {
      fail(ErrorKind::kInvalidArgument, "pseudo-label " + std::to_string(e.pseudo_label) +
                                            " is not in the entry's candidate set");
    }
    const auto target = static_cast<Eigen::Index>(pos - cands.begin());
    const FusionTrace t = fuse_forward(q, e.features->values, params, nullptr, true);
    const RowVector v = t.projected.row(0);
    RowVector logits(static_cast<Eigen::Index>(cand_idx.size()));
    for (std::size_t k = 0; k < cand_idx.size(); ++k) {
      logits(static_cast<Eigen::Index>(k)) =
          v.dot(fr.row(static_cast<Eigen::Index>(cand_idx[k] * gr))) * inv_tau;
    }
    res.loss += (log_sum_exp(logits) - logits(target)) * inv_b;
    RowVector d_logits = softmax(logits);
    d_logits(target) -= 1.0;
    d_logits *= inv_b * inv_tau;
    RowVector d_v = RowVector::Zero(v.size());
    for (std::size_t k = 0; k < cand_idx.size(); ++k) {
      const auto row = static_cast<Eigen::Index>(cand_idx[k] * gr);
      const double g = d_logits(static_cast<Eigen::Index>(k));
      d_v += g * fr.row(row);
      d_refined.row(row) += g * v;
    }
    Matrix d_q;
    fuse_backward(t, e.features->values, Matrix(d_v), params, nullptr, &d_q);
    d_query += d_q.row(0);
  }
  d_query /= static_cast<double>(query_idx.size());
  for (std::size_t c : query_idx) d_refined.row(static_cast<Eigen::Index>(c * gr)) += d_query;

  // Through the row normalization.
  Matrix d_u(fr.rows(), fr.cols());
  for (Eigen::Index r = 0; r < fr.rows(); ++r) {
    const double along = d_refined.row(r).dot(fr.row(r));
    d_u.row(r) = (d_refined.row(r) - along * fr.row(r)) / norms(r);
  }
  res.grad_scale = d_u.cwiseProduct(f);
  res.grad_bias = std::move(d_u);
  return res;
}

double adapt_step(std::span<const BankEntry> batch, const SemanticAnchorSet& anchors,
                  RefinementState& state, const AlignmentParams& params,
                  const CandidateSets& candidates) {
  AdaptResult r = adaptation_loss(batch, anchors, state, params, candidates);
  if (!std::isfinite(r.loss)) fail(ErrorKind::kNumeric, "non-finite adaptation loss");
  const double lr = state.current_rate();
  if (state.optimizer == OptimizerKind::kAdam) {
    state.adam_scale.step(state.scale, r.grad_scale, lr);
    state.adam_bias.step(state.bias, r.grad_bias, lr);
  } else {
    state.scale -= lr * r.grad_scale;
    state.bias -= lr * r.grad_bias;
  }
  ++state.step_count;
  return r.loss;
}

// ---------------------------------------------------------------------------

Protocol parse_protocol(std::string_view name) {
  if (name == "zsl") return Protocol::kZsl;
  if (name == "gzsl") return Protocol::kGzsl;
  fail(ErrorKind::kInvalidArgument, "unknown protocol \"" + std::string(name) + "\"");
}

const char* protocol_name(Protocol p) { return p == Protocol::kZsl ? "zsl" : "gzsl"; }

TtaMode parse_tta_mode(std::string_view name) {
  if (name == "off") return TtaMode::kOff;
  if (name == "nobank") return TtaMode::kNoBank;
  if (name == "full") return TtaMode::kFull;
  fail(ErrorKind::kInvalidArgument, "unknown tta mode \"" + std::string(name) + "\"");
}

const char* tta_mode_name(TtaMode m) {
  switch (m) {
    case TtaMode::kOff:
      return "off";
    case TtaMode::kNoBank:
      return "nobank";
    case TtaMode::kFull:
      break;
  }
  return "full";
}

StreamResult run_stream(std::span<const VisualFeatureMap> stream, const SemanticAnchorSet& anchors,
                        const AlignmentParams& params, const ClassSplit& split,
                        const StreamConfig& cfg) {
  CandidateSets sets;
  sets.seen = split.seen_list();
  sets.unseen = split.unseen_list();
  sets.all = cfg.protocol == Protocol::kZsl ? sets.unseen : split.all_list();
  if (sets.all.empty()) fail(ErrorKind::kProtocol, "protocol violation: empty candidate set");
  if (cfg.protocol == Protocol::kGzsl && sets.unseen.empty()) {
    fail(ErrorKind::kProtocol, "protocol violation: gzsl needs nonempty seen and unseen sets");
  }
  const auto all_idx = indices_of(anchors, sets.all);
  indices_of(anchors, sets.seen);
  indices_of(anchors, sets.unseen);
  for (const auto& s : stream) {
    if (cfg.protocol == Protocol::kZsl && !split.is_unseen(s.class_id)) {
      fail(ErrorKind::kProtocol, "protocol violation: zsl stream sample " + s.sample_id +
                                     " has seen class " + std::to_string(s.class_id));
    }
    if (!split.contains(s.class_id)) {
      fail(ErrorKind::kInvalidArgument, "sample " + s.sample_id + " has class " +
                                            std::to_string(s.class_id) + " outside the split");
    }
  }

  Schedule schedule{cfg.schedule, cfg.refine_rate,
                    cfg.horizon.value_or(static_cast<std::int64_t>(std::max<std::size_t>(stream.size(), 1)))};
  RefinementState state = RefinementState::identity(anchors, schedule, cfg.optimizer);
  const SemanticAnchorSet& initial = anchors;
  MemoryBank bank(cfg.bank_capacity, cfg.conf_threshold);
  Rng rng(substream_seed(cfg.seed, "bank"));
  const std::size_t b_min = cfg.b_min.value_or(std::max<std::size_t>(sets.all.size(), 8));

  StreamResult res;
  res.records.reserve(stream.size());
  double loss_sum = 0.0;
  std::size_t correct = 0;
  const bool frozen = cfg.tta == TtaMode::kOff;

  auto logits_for = [&](const GlobalScores& s, const std::vector<std::size_t>& idx) {
    RowVector l(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      l(static_cast<Eigen::Index>(k)) = s.cosines(static_cast<Eigen::Index>(idx[k])) / params.temperature;
    }
    return l;
  };

  for (const VisualFeatureMap& sample : stream) {
    const SemanticAnchorSet refined = res.adapt_steps == 0 ? initial : refine_anchors(anchors, state);
    const GlobalScores scores = score_global(sample, refined, params, all_idx);
    Prediction full = make_prediction(sets.all, logits_for(scores, all_idx));

    StreamRecord rec;
    rec.sample_id = sample.sample_id;
    rec.true_class = sample.class_id;
    Prediction chosen;
    if (cfg.protocol == Protocol::kZsl) {
      rec.route = Route::kAll;
      rec.full_entropy = full.entropy;
      chosen = std::move(full);
    } else {
      const RowVector full_logits = logits_for(scores, all_idx);
      double gate_delta = cfg.delta;
      if (!cfg.gate_on_refined && !frozen) {
        // Route on the unrefined anchors: force the matching branch below.
        const GlobalScores base = score_global(sample, initial, params, all_idx);
        const double h = make_prediction(sets.all, logits_for(base, all_idx)).entropy;
        rec.full_entropy = h;
        gate_delta = h < cfg.delta ? std::numeric_limits<double>::infinity() : 0.0;
      }
      GatedPrediction gated = triage_logits(full_logits, split, gate_delta);
      if (cfg.gate_on_refined || frozen) rec.full_entropy = gated.full_entropy;
      rec.route = gated.route;
      chosen = std::move(gated.prediction);
    }
    rec.predicted = chosen.label;
    rec.confidence = chosen.confidence;
    rec.entropy = chosen.entropy;
    if (rec.predicted == rec.true_class) ++correct;

    const bool confident = chosen.confidence > cfg.conf_threshold;
    if (!frozen && confident) {
      BankEntry entry;
      entry.features = std::make_shared<const VisualFeatureMap>(sample);
      entry.pseudo_label = chosen.label;
      entry.confidence = chosen.confidence;
      entry.route = rec.route;
      if (cfg.tta == TtaMode::kNoBank) {
        for (std::size_t k = 0; k < cfg.steps_per_sample; ++k) {
          loss_sum += adapt_step(std::span<const BankEntry>(&entry, 1), anchors, state, params, sets);
          ++res.adapt_steps;
        }
        rec.adapted = true;
      } else if (!cfg.seen_only_bank || rec.route == Route::kSeen) {
        bank.insert(std::move(entry));
        rec.banked = true;
      }
    }
    if (cfg.tta == TtaMode::kFull && !bank.empty() && bank.size() >= b_min) {
      const std::size_t batch = cfg.adapt_batch.value_or(std::min<std::size_t>(bank.size(), 64));
      for (std::size_t k = 0; k < cfg.steps_per_sample; ++k) {
        const auto entries = bank.sample_balanced(batch, rng);
        loss_sum += adapt_step(entries, anchors, state, params, sets);
        ++res.adapt_steps;
      }
      rec.adapted = true;
    }
    res.records.push_back(std::move(rec));
  }

  for (const auto& [c, store] : bank.classes()) res.bank_sizes[c] = store.size();
  res.mean_adapt_loss = res.adapt_steps > 0 ? loss_sum / static_cast<double>(res.adapt_steps) : 0.0;
  res.top1 = stream.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(stream.size());
  res.final_state = std::move(state);
  return res;
}

}  // namespace zsr
