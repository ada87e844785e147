// Copyright 2026 the pdsim authors
// SPDX-License-Identifier: Apache-2.0

#include "pdsim/proxy.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace pdsim;

namespace {

CalibrationProfile profile() {
  CalibrationProfile p;
  p.base_iter_ms = 44.0;
  p.per_prefill_token_ms = 0.2;
  p.per_decode_req_ms = 0.05;
  p.ref_decode_batch = 16;
  return p;
}

InstanceSnapshot snap(InstanceId id, InstanceKind kind, Tokens chunk,
                      std::vector<Tokens> queue = {}, int decodes = 0) {
  InstanceSnapshot s;
  s.id = id;
  s.kind = kind;
  s.chunk_size = chunk;
  s.running_decode_count = decodes;
  s.queued_prefill_remaining = std::move(queue);
  return s;
}

TEST(Feasibility, ComponentsAndStrictBound) {
  auto p = profile();
  auto d = snap(0, InstanceKind::DHeavy, 512, {512}, 16);
  auto est = estimate_feasibility(512, d, p, 10'000.0);
  EXPECT_DOUBLE_EQ(est.q_ms, 44.0 + 0.2 * 512);
  EXPECT_DOUBLE_EQ(est.e_ms, 44.0 + 0.2 * 512);
  EXPECT_DOUBLE_EQ(est.t_ms, 0.0);  // D-heavy pays no transfer
  EXPECT_TRUE(est.feasible);

  // Exactly at the bound is infeasible (strict inequality).
  double exact = est.q_ms + est.e_ms;
  EXPECT_FALSE(estimate_feasibility(512, d, p, exact).feasible);
  EXPECT_TRUE(estimate_feasibility(512, d, p, exact + 1e-9).feasible);
}

TEST(Feasibility, PHeavyIncludesTransfer) {
  auto p = profile();
  auto ph = snap(0, InstanceKind::PHeavy, 1024, {}, 0);
  auto est = estimate_feasibility(3000, ph, p, 1e9);
  EXPECT_GT(est.t_ms, 0.0);
  EXPECT_DOUBLE_EQ(est.t_ms, transfer_time_ms(p, 3000));
}

TEST(Feasibility, ChunklessInstanceNeverFeasible) {
  auto p = profile();
  auto d = snap(0, InstanceKind::DHeavy, 0);
  EXPECT_FALSE(estimate_feasibility(10, d, p, 1e12).feasible);
}

TEST(SchedulePrefill, PrefersFewestQueuedTokens) {
  auto p = profile();
  // Degradation path: the D-heavy with 500 queued tokens wins over the
  // P-heavy with 2000 even though P-heavy executes faster.
  std::vector<InstanceSnapshot> insts{
      snap(0, InstanceKind::PHeavy, 1024, {2000}),
      snap(1, InstanceKind::DHeavy, 512, {500}),
  };
  auto pick = schedule_prefill(600, insts, p, 1e9);
  ASSERT_TRUE(pick.has_value());
  EXPECT_EQ(*pick, 1);
}

TEST(SchedulePrefill, InfeasibleWhenNoInstanceFits) {
  auto p = profile();
  std::vector<InstanceSnapshot> insts{
      snap(0, InstanceKind::PHeavy, 1024, {8000, 8000}),
      snap(1, InstanceKind::DHeavy, 256, {4000}),
  };
  EXPECT_FALSE(schedule_prefill(4000, insts, p, 100.0).has_value());
}

TEST(SchedulePrefill, TieBreaksByLowestId) {
  auto p = profile();
  std::vector<InstanceSnapshot> insts{
      snap(0, InstanceKind::PHeavy, 1024),
      snap(1, InstanceKind::PHeavy, 1024),
      snap(2, InstanceKind::DHeavy, 512),
  };
  auto pick = schedule_prefill(3000, insts, p, 1e9);
  ASSERT_TRUE(pick.has_value());
  EXPECT_EQ(*pick, 0);

  // Unequal queues: the less-loaded instance wins regardless of id.
  insts[0].queued_prefill_remaining = {100};
  pick = schedule_prefill(3000, insts, p, 1e9);
  ASSERT_TRUE(pick.has_value());
  EXPECT_EQ(*pick, 1);
}

TEST(SchedulePrefill, FeasibilityMonotoneInQueueLoad) {
  auto p = profile();
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Tokens> queue;
    std::size_t n = gen() % 6;
    for (std::size_t i = 0; i < n; ++i) queue.push_back(1 + static_cast<Tokens>(gen() % 3000));
    Tokens len = 1 + static_cast<Tokens>(gen() % 4000);
    double slo = 200.0 + static_cast<double>(gen() % 4000);
    auto kind = (gen() % 2) ? InstanceKind::PHeavy : InstanceKind::DHeavy;
    auto with = snap(0, kind, 512, queue);
    bool feasible_with = estimate_feasibility(len, with, p, slo).feasible;
    if (!queue.empty()) {
      auto less = with;
      less.queued_prefill_remaining.pop_back();
      bool feasible_less = estimate_feasibility(len, less, p, slo).feasible;
      // removing queued tokens can only help
      if (feasible_with) EXPECT_TRUE(feasible_less);
    }
  }
}

TEST(SchedulePrefill, ChosenAlwaysInFeasibleSet) {
  auto p = profile();
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<InstanceSnapshot> insts;
    int n = 1 + static_cast<int>(gen() % 8);
    for (int i = 0; i < n; ++i) {
      std::vector<Tokens> queue;
      std::size_t qlen = gen() % 5;
      for (std::size_t k = 0; k < qlen; ++k) queue.push_back(1 + static_cast<Tokens>(gen() % 2000));
      insts.push_back(snap(i, (gen() % 2) ? InstanceKind::PHeavy : InstanceKind::DHeavy,
                           (gen() % 4 == 0) ? 0 : 256 << (gen() % 3), std::move(queue),
                           static_cast<int>(gen() % 32)));
    }
    Tokens len = 1 + static_cast<Tokens>(gen() % 4000);
    double slo = 100.0 + static_cast<double>(gen() % 3000);
    auto pick = schedule_prefill(len, insts, p, slo);
    if (pick) {
      const auto& chosen = insts[static_cast<std::size_t>(*pick)];
      EXPECT_TRUE(estimate_feasibility(len, chosen, p, slo).feasible);
    }
  }
}

TEST(FallbackAssign, DeterministicPerSeedAndFiltersChunkless) {
  std::vector<InstanceSnapshot> insts{
      snap(0, InstanceKind::PHeavy, 1024),
      snap(1, InstanceKind::DHeavy, 0),  // disaggregated decode role: ineligible
      snap(2, InstanceKind::PHeavy, 1024),
      snap(3, InstanceKind::DHeavy, 256),
  };
  Rng a(99), b(99);
  for (int i = 0; i < 200; ++i) {
    InstanceId pick = fallback_assign(insts, a);
    EXPECT_EQ(pick, fallback_assign(insts, b));
    EXPECT_NE(pick, 1);
  }
}

TEST(FallbackAssign, UniformOverEligible) {
  std::vector<InstanceSnapshot> insts{
      snap(0, InstanceKind::PHeavy, 1024),
      snap(1, InstanceKind::DHeavy, 512),
      snap(2, InstanceKind::DHeavy, 512),
  };
  Rng rng(7);
  std::vector<int> counts(3, 0);
  const int draws = 30'000;
  for (int i = 0; i < draws; ++i) counts[static_cast<std::size_t>(fallback_assign(insts, rng))]++;
  double expected = draws / 3.0;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // dof 2, significance 0.01
  EXPECT_LT(chi2, 9.210);
}

TEST(FallbackAssign, ErrorsWhenNothingEligible) {
  std::vector<InstanceSnapshot> insts{snap(0, InstanceKind::DHeavy, 0)};
  Rng rng(1);
  EXPECT_THROW(fallback_assign(insts, rng), ConfigError);
}

TEST(RoundRobin, CyclesOverPrefillCapable) {
  std::vector<InstanceSnapshot> insts{
      snap(0, InstanceKind::PHeavy, 1024),
      snap(1, InstanceKind::DHeavy, 0),
      snap(2, InstanceKind::DHeavy, 512),
  };
  RoundRobinRouter rr;
  EXPECT_EQ(rr.next(insts), 0);
  EXPECT_EQ(rr.next(insts), 2);
  EXPECT_EQ(rr.next(insts), 0);
}

}  // namespace
