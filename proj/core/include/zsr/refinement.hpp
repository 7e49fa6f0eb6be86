#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zsr/alignment.hpp"
#include "zsr/anchors.hpp"
#include "zsr/linalg.hpp"
#include "zsr/optim.hpp"
#include "zsr/random.hpp"

namespace zsr {

enum class OptimizerKind { kAdam, kSgd };

OptimizerKind parse_optimizer_kind(std::string_view name);
const char* optimizer_kind_name(OptimizerKind kind);

// Test-time refinement parameters: elementwise scale (init 1) and bias
// (init 0) over the whole C x Gr x d anchor tensor, stored row-aligned with
// SemanticAnchorSet::values().
struct RefinementState {
  Matrix scale;
  Matrix bias;
  Schedule schedule;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::int64_t step_count = 0;
  AdamState adam_scale;
  AdamState adam_bias;

  static RefinementState identity(const SemanticAnchorSet& anchors, Schedule schedule = {},
                                  OptimizerKind optimizer = OptimizerKind::kAdam);

  double current_rate() const { return schedule.rate(step_count); }
};

// F' = normalize(scale * F + bias), per d-vector.
SemanticAnchorSet refine_anchors(const SemanticAnchorSet& anchors, const RefinementState& state);

struct Prediction {
  std::vector<ClassId> classes;  // candidate classes, ascending
  RowVector probs;               // simplex over `classes`
  ClassId label = 0;             // argmax, lowest class id on ties
  double confidence = 0.0;       // probs at label
  double entropy = 0.0;          // natural log
};

// Softmax over candidates of cosine(v, f'_c,global) / temperature, where v is
// the projected global row fused with the class-agnostic query built from the
// `query_classes` anchors (defaults to the candidates).
Prediction predict(const VisualFeatureMap& features, const SemanticAnchorSet& refined,
                   const AlignmentParams& params, std::span<const ClassId> candidates,
                   std::span<const ClassId> query_classes = {});

// Turns logits over ascending `classes` into a Prediction.
Prediction make_prediction(std::vector<ClassId> classes, const RowVector& logits);

// Global similarity scores of one sample against every anchor class. Shared by
// prediction and gating so that both use identical arithmetic.
struct GlobalScores {
  RowVector projected;  // v, unit norm
  RowVector cosines;    // per anchor-set class index
};
GlobalScores score_global(const VisualFeatureMap& features, const SemanticAnchorSet& refined,
                          const AlignmentParams& params,
                          std::span<const std::size_t> query_class_indices);

// ---------------------------------------------------------------------------
// Class-balanced memory bank

// Which candidate set a pseudo-label was drawn from.
enum class Route { kAll, kSeen, kUnseen };

struct BankEntry {
  std::shared_ptr<const VisualFeatureMap> features;
  ClassId pseudo_label = 0;
  double confidence = 0.0;
  std::uint64_t insertion_index = 0;
  Route route = Route::kAll;
};

class MemoryBank {
 public:
  explicit MemoryBank(std::size_t capacity_per_class = 16, double confidence_threshold = 0.1);

  std::size_t capacity() const { return capacity_; }
  double confidence_threshold() const { return threshold_; }

  // Appends to the pseudo-label's store; over capacity, evicts the lowest
  // confidence entry, oldest first on ties. Entry confidence must exceed the
  // threshold. Returns the evicted entry's insertion index, if any.
  std::optional<std::uint64_t> insert(BankEntry entry);

  std::size_t size() const { return total_; }
  std::size_t class_size(ClassId c) const;
  bool empty() const { return total_ == 0; }
  const std::map<ClassId, std::vector<BankEntry>>& classes() const { return stores_; }
  std::uint64_t inserted() const { return next_index_; }

  // Round-robin over nonempty classes in ascending id, one uniformly drawn
  // unused entry per class per pass, until `batch_size` or exhaustion.
  std::vector<BankEntry> sample_balanced(std::size_t batch_size, Rng& rng) const;

 private:
  std::size_t capacity_;
  double threshold_;
  std::map<ClassId, std::vector<BankEntry>> stores_;
  std::size_t total_ = 0;
  std::uint64_t next_index_ = 0;
};

// Free-function spellings of the bank operations.
inline void bank_insert(MemoryBank& bank, BankEntry entry) { bank.insert(std::move(entry)); }
inline std::vector<BankEntry> bank_sample_balanced(const MemoryBank& bank, std::size_t batch_size,
                                                   Rng& rng) {
  return bank.sample_balanced(batch_size, rng);
}

// ---------------------------------------------------------------------------
// Online adaptation

// Candidate sets an adaptation batch may reference through BankEntry::route.
struct CandidateSets {
  std::vector<ClassId> all;     // also the query classes
  std::vector<ClassId> seen;
  std::vector<ClassId> unseen;

  const std::vector<ClassId>& for_route(Route r) const;
};

struct AdaptResult {
  double loss = 0.0;
  Matrix grad_scale;
  Matrix grad_bias;
};

// Pseudo-label cross-entropy over the batch, recomputed through
// refine_anchors -> fusion -> prediction with the current state, and its exact
// gradients with respect to scale and bias. Does not modify the state.
AdaptResult adaptation_loss(std::span<const BankEntry> batch, const SemanticAnchorSet& anchors,
                            const RefinementState& state, const AlignmentParams& params,
                            const CandidateSets& candidates);

// adaptation_loss plus one optimizer step at the scheduled rate; increments
// the step counter. Returns the pre-update loss.
double adapt_step(std::span<const BankEntry> batch, const SemanticAnchorSet& anchors,
                  RefinementState& state, const AlignmentParams& params,
                  const CandidateSets& candidates);

// ---------------------------------------------------------------------------
// Streaming inference

enum class Protocol { kZsl, kGzsl };
enum class TtaMode { kOff, kNoBank, kFull };

Protocol parse_protocol(std::string_view name);
const char* protocol_name(Protocol p);
TtaMode parse_tta_mode(std::string_view name);
const char* tta_mode_name(TtaMode m);

struct StreamConfig {
  Protocol protocol = Protocol::kZsl;
  TtaMode tta = TtaMode::kFull;
  std::size_t bank_capacity = 16;
  double conf_threshold = 0.1;
  std::optional<std::size_t> b_min;         // default max(|candidates|, 8)
  double refine_rate = 0.01;
  ScheduleKind schedule = ScheduleKind::kCosine;
  std::optional<std::int64_t> horizon;      // default: stream length
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::optional<std::size_t> adapt_batch;   // default min(bank size, 64)
  std::size_t steps_per_sample = 1;
  double delta = 1.0;                       // GZSL entropy threshold
  bool gate_on_refined = true;              // gate with F' (else static F)
  bool seen_only_bank = false;              // only bank samples routed seen
  std::uint64_t seed = 0;
};

struct StreamRecord {
  std::string sample_id;
  ClassId true_class = 0;
  ClassId predicted = 0;
  double confidence = 0.0;
  double entropy = 0.0;       // of the returned distribution
  double full_entropy = 0.0;  // over all candidates (the gating quantity)
  Route route = Route::kAll;
  bool banked = false;
  bool adapted = false;
};

struct StreamResult {
  std::vector<StreamRecord> records;
  RefinementState final_state;
  std::map<ClassId, std::size_t> bank_sizes;
  std::size_t adapt_steps = 0;
  double mean_adapt_loss = 0.0;
  double top1 = 0.0;  // 0 for an empty stream
};

// Sequential test-time refinement over `stream` in order.
StreamResult run_stream(std::span<const VisualFeatureMap> stream, const SemanticAnchorSet& anchors,
                        const AlignmentParams& params, const ClassSplit& split,
                        const StreamConfig& cfg);

}  // namespace zsr
