#include <algorithm>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "expect_error.hpp"
#include "zsr/refinement.hpp"

namespace zsr {
namespace {

BankEntry entry(ClassId label, double confidence) {
  BankEntry e;
  e.features = std::make_shared<const VisualFeatureMap>();
  e.pseudo_label = label;
  e.confidence = confidence;
  return e;
}

std::multiset<double> confidences(const MemoryBank& bank, ClassId c) {
  std::multiset<double> out;
  const auto it = bank.classes().find(c);
  if (it != bank.classes().end())
    for (const auto& e : it->second) out.insert(e.confidence);
  return out;
}

TEST(Bank, FirstInsertGivesSizeOne) {
  MemoryBank bank(16, 0.1);
  EXPECT_TRUE(bank.empty());
  EXPECT_FALSE(bank.insert(entry(4, 0.5)).has_value());
  EXPECT_EQ(bank.class_size(4), 1u);
  EXPECT_EQ(bank.size(), 1u);
}

TEST(Bank, KeepsTopConfidences) {
  MemoryBank bank(3, 0.1);
  for (double c : {0.5, 0.9, 0.7, 0.6, 0.8}) bank.insert(entry(0, c));
  EXPECT_EQ(confidences(bank, 0), (std::multiset<double>{0.9, 0.8, 0.7}));
}

TEST(Bank, EvictsOldestOnTies) {
  MemoryBank bank(2, 0.1);
  bank.insert(entry(0, 0.4));
  bank.insert(entry(0, 0.4));
  EXPECT_EQ(bank.insert(entry(0, 0.4)), std::optional<std::uint64_t>(0));
  EXPECT_EQ(bank.insert(entry(0, 0.9)), std::optional<std::uint64_t>(1));
}

TEST(Bank, DefaultCapacityIsSixteen) {
  MemoryBank bank;
  EXPECT_EQ(bank.capacity(), 16u);
  EXPECT_EQ(bank.confidence_threshold(), 0.1);
  for (int i = 0; i < 17; ++i) {
    bank.insert(entry(1, 0.2 + 0.01 * i));
    EXPECT_LE(bank.class_size(1), 16u);
  }
  EXPECT_EQ(bank.class_size(1), 16u);
}

TEST(Bank, RejectsLowConfidence) {
  MemoryBank bank(4, 0.3);
  testing::expect_error([&] { bank.insert(entry(0, 0.3)); }, ErrorKind::kInvalidArgument, "threshold");
  EXPECT_THROW(MemoryBank(0, 0.1), Error);
  EXPECT_THROW(MemoryBank(4, 1.5), Error);
}

TEST(Bank, MatchesSortAndTruncateOracle) {
  Rng rng(1);
  for (int stream = 0; stream < 300; ++stream) {
    const std::size_t k = 1 + rng.index(5);
    MemoryBank bank(k, 0.1);
    std::map<ClassId, std::vector<std::pair<double, std::uint64_t>>> inserted;
    const std::size_t n = rng.index(40);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<ClassId>(rng.index(4));
      // Coarse values so ties happen often.
      const double conf = 0.1 + 0.1 * static_cast<double>(1 + rng.index(9));
      bank.insert(entry(c, conf));
      inserted[c].push_back({conf, i});
      ASSERT_LE(bank.class_size(c), k);
    }
    for (auto& [c, list] : inserted) {
      std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second > b.second;
      });
      list.resize(std::min(list.size(), k));
      std::set<std::uint64_t> expected;
      for (const auto& p : list) expected.insert(p.second);
      std::set<std::uint64_t> got;
      for (const auto& e : bank.classes().at(c)) {
        got.insert(e.insertion_index);
        EXPECT_GT(e.confidence, 0.1);
      }
      EXPECT_EQ(got, expected);
    }
  }
}

TEST(SampleBalanced, OnePerClassInOnePass) {
  MemoryBank bank(8, 0.1);
  for (ClassId c : {2, 5, 9})
    for (int i = 0; i < 3; ++i) bank.insert(entry(c, 0.5));
  Rng rng(2);
  const auto batch = bank.sample_balanced(3, rng);
  ASSERT_EQ(batch.size(), 3u);
  EXPECT_EQ(batch[0].pseudo_label, 2);
  EXPECT_EQ(batch[1].pseudo_label, 5);
  EXPECT_EQ(batch[2].pseudo_label, 9);
}

TEST(SampleBalanced, RoundRobinCounts) {
  MemoryBank bank(8, 0.1);
  bank.insert(entry(0, 0.5));
  for (int i = 0; i < 5; ++i) bank.insert(entry(1, 0.5));
  Rng rng(3);
  std::map<ClassId, int> counts;
  for (const auto& e : bank.sample_balanced(4, rng)) ++counts[e.pseudo_label];
  EXPECT_EQ(counts[0], 1);
  EXPECT_EQ(counts[1], 3);
}

TEST(SampleBalanced, ExhaustionReturnsEachEntryOnce) {
  MemoryBank bank(8, 0.1);
  for (int i = 0; i < 7; ++i) bank.insert(entry(static_cast<ClassId>(i % 3), 0.5));
  Rng rng(4);
  const auto batch = bank.sample_balanced(100, rng);
  std::set<std::uint64_t> seen;
  for (const auto& e : batch) seen.insert(e.insertion_index);
  EXPECT_EQ(batch.size(), 7u);
  EXPECT_EQ(seen.size(), 7u);
}

TEST(SampleBalanced, DeterministicGivenSeed) {
  MemoryBank bank(8, 0.1);
  for (int i = 0; i < 20; ++i) bank.insert(entry(static_cast<ClassId>(i % 4), 0.2 + 0.03 * i));
  Rng a(5), b(5);
  const auto x = bank.sample_balanced(9, a);
  const auto y = bank.sample_balanced(9, b);
  ASSERT_EQ(x.size(), y.size());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(x[i].insertion_index, y[i].insertion_index);
}

TEST(SampleBalanced, MatchesRoundRobinSimulation) {
  Rng rng(6);
  for (int rep = 0; rep < 200; ++rep) {
    MemoryBank bank(6, 0.1);
    std::map<ClassId, std::size_t> sizes;
    const std::size_t n = 1 + rng.index(25);
    for (std::size_t i = 0; i < n; ++i) bank.insert(entry(static_cast<ClassId>(rng.index(5)), 0.5));
    for (const auto& [c, store] : bank.classes()) sizes[c] = store.size();
    const std::size_t want = 1 + rng.index(30);
    std::map<ClassId, std::size_t> expected;
    std::size_t taken = 0;
    while (taken < std::min(want, bank.size())) {
      for (auto& [c, left] : sizes) {
        if (taken == want) break;
        if (left == 0) continue;
        --left;
        ++expected[c];
        ++taken;
      }
    }
    Rng draw(rep);
    std::map<ClassId, std::size_t> got;
    for (const auto& e : bank.sample_balanced(want, draw)) ++got[e.pseudo_label];
    EXPECT_EQ(got, expected);
  }
}

TEST(SampleBalanced, EmptyBankThrows) {
  MemoryBank bank;
  Rng rng(7);
  EXPECT_THROW(bank.sample_balanced(4, rng), Error);
}

}  // namespace
}  // namespace zsr
