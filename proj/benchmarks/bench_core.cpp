#include <memory>

#include <benchmark/benchmark.h>

#include "zsr/alignment.hpp"
#include "zsr/refinement.hpp"
#include "zsr/synth.hpp"
#include "zsr/train.hpp"

namespace zsr {
namespace {

SynthConfig bench_config() {
  SynthConfig cfg = synth_preset("shifted");
  cfg.seed = 1;
  return cfg;
}

const SynthData& bench_data() {
  static const SynthData data = synth_build(bench_config());
  return data;
}

AlignmentParams bench_params(const SynthData& d) {
  return AlignmentParams::init(
      {d.config.anchor_dim, d.config.feature_dim, 32, 64, d.config.granularities()}, 3);
}

void BM_AttentionFuse(benchmark::State& state) {
  const SynthData& d = bench_data();
  const SemanticAnchorSet anchors = d.anchor_set();
  const AlignmentParams p = bench_params(d);
  const Matrix q = anchors.class_block(0);
  const VisualFeatureMap& g = d.train.front();
  for (auto _ : state) benchmark::DoNotOptimize(attention_fuse(q, g, p));
}
BENCHMARK(BM_AttentionFuse);

void BM_AdaptStep(benchmark::State& state) {
  const SynthData& d = bench_data();
  const SemanticAnchorSet anchors = d.anchor_set();
  const AlignmentParams p = bench_params(d);
  const CandidateSets sets{d.split.unseen_list(), d.split.seen_list(), d.split.unseen_list()};
  std::vector<BankEntry> batch;
  const auto stream = d.unseen_test();
  for (std::size_t i = 0; i < static_cast<std::size_t>(state.range(0)); ++i) {
    const auto& s = stream[i % stream.size()];
    BankEntry e;
    e.features = std::make_shared<const VisualFeatureMap>(s);
    e.pseudo_label = s.class_id;
    e.confidence = 0.9;
    e.route = Route::kAll;
    batch.push_back(std::move(e));
  }
  RefinementState st = RefinementState::identity(anchors);
  for (auto _ : state) benchmark::DoNotOptimize(adapt_step(batch, anchors, st, p, sets));
}
BENCHMARK(BM_AdaptStep)->Arg(16)->Arg(64);

void BM_BankInsert(benchmark::State& state) {
  Rng rng(5);
  std::vector<BankEntry> entries(4096);
  for (auto& e : entries) {
    e.pseudo_label = static_cast<ClassId>(rng.index(10));
    e.confidence = 0.1 + 0.9 * rng.uniform() + 1e-9;
  }
  for (auto _ : state) {
    MemoryBank bank(16, 0.1);
    for (const auto& e : entries) bank.insert(e);
    benchmark::DoNotOptimize(bank.size());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(entries.size()));
}
BENCHMARK(BM_BankInsert);

void BM_TrainingEpoch(benchmark::State& state) {
  const SynthData& d = bench_data();
  const SemanticAnchorSet anchors = d.anchor_set();
  TrainConfig tc;
  tc.max_epochs = 1;
  tc.batch_size = 64;
  tc.hidden = 32;
  tc.mlp_hidden = 64;
  for (auto _ : state) benchmark::DoNotOptimize(train(d.train, anchors, d.split, tc));
}
BENCHMARK(BM_TrainingEpoch)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace zsr

BENCHMARK_MAIN();
