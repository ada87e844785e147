// Copyright 2026 the pdsim authors
// SPDX-License-Identifier: Apache-2.0

#include "pdsim/cost_model.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <vector>

using namespace pdsim;

namespace {

CalibrationProfile reference_profile() {
  CalibrationProfile p;
  p.base_iter_ms = 44.0;
  p.per_prefill_token_ms = 0.2;
  p.per_decode_req_ms = 0.05;
  p.ref_decode_batch = 16;
  return p;
}

TEST(IterationTime, DecodeOnlyAtReferenceBatchIsBase) {
  EXPECT_DOUBLE_EQ(iteration_time_ms(reference_profile(), 0, 16), 44.0);
}

TEST(IterationTime, FullChunkAtReferenceBatch) {
  EXPECT_DOUBLE_EQ(iteration_time_ms(reference_profile(), 1024, 16), 44.0 + 0.2 * 1024);
}

TEST(IterationTime, SlopeIsPerPrefillToken) {
  auto p = reference_profile();
  EXPECT_DOUBLE_EQ(iteration_time_ms(p, 1, 16) - iteration_time_ms(p, 0, 16), 0.2);
}

TEST(IterationTime, AffineInPrefillTokensEverywhere) {
  auto p = reference_profile();
  for (Tokens tok : {0, 1, 7, 100, 511, 4096}) {
    for (int d : {1, 8, 16, 64}) {
      EXPECT_NEAR(iteration_time_ms(p, tok + 1, d) - iteration_time_ms(p, tok, d),
                  p.per_prefill_token_ms, 1e-12);
    }
  }
}

TEST(IterationTime, MonotoneInBothArguments) {
  auto p = reference_profile();
  double prev = iteration_time_ms(p, 0, 1);
  for (int d = 2; d <= 64; ++d) {
    double cur = iteration_time_ms(p, 0, d);
    EXPECT_GE(cur, prev);
    prev = cur;
  }
  prev = iteration_time_ms(p, 1, 0);
  for (Tokens tok = 2; tok <= 2048; tok += 17) {
    double cur = iteration_time_ms(p, tok, 0);
    EXPECT_GE(cur, prev);
    prev = cur;
  }
}

TEST(IterationTime, SmallDecodeBatchNeverGoesNonPositive) {
  CalibrationProfile p;
  p.base_iter_ms = 10.0;
  p.per_prefill_token_ms = 0.1;
  p.per_decode_req_ms = 2.0;  // extrapolation below ref would cross zero
  p.ref_decode_batch = 8;
  // raw = 10 + 2*(1-8) = -4 -> floored at 2*1
  EXPECT_DOUBLE_EQ(iteration_time_ms(p, 0, 1), 2.0);
}

TEST(IterationTime, RejectsEmptyBatch) {
  EXPECT_THROW(iteration_time_ms(reference_profile(), 0, 0), std::invalid_argument);
}

TEST(PrefillEstimate, TwoFullChunks) {
  auto p = reference_profile();
  EXPECT_DOUBLE_EQ(estimate_prefill_execution_ms(p, 2048, 1024, 16),
                   2.0 * iteration_time_ms(p, 1024, 16));
  EXPECT_NEAR(estimate_prefill_execution_ms(p, 2048, 1024, 16), 497.6, 1e-9);
}

TEST(PrefillEstimate, SingleTokenPromptIsOneIteration) {
  auto p = reference_profile();
  EXPECT_DOUBLE_EQ(estimate_prefill_execution_ms(p, 1, 1024, 16), iteration_time_ms(p, 1, 16));
}

TEST(PrefillEstimate, TailChunkCarriesRemainder) {
  auto p = reference_profile();
  EXPECT_DOUBLE_EQ(estimate_prefill_execution_ms(p, 1500, 1024, 16),
                   iteration_time_ms(p, 1024, 16) + iteration_time_ms(p, 476, 16));
}

TEST(PrefillEstimate, ChunkDecompositionOracle) {
  // Independent oracle: explicitly walk the chunks and sum.
  auto p = reference_profile();
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 200; ++trial) {
    Tokens len = 1 + static_cast<Tokens>(gen() % 5000);
    Tokens chunk = 1 + static_cast<Tokens>(gen() % 2048);
    int decode = static_cast<int>(gen() % 64);
    double expected = 0.0;
    for (Tokens done = 0; done < len;) {
      Tokens take = std::min(chunk, len - done);
      expected += iteration_time_ms(p, take, decode);
      done += take;
    }
    EXPECT_NEAR(estimate_prefill_execution_ms(p, len, chunk, decode), expected, 1e-9);
  }
}

TEST(PrefillEstimate, ChunkAtLeastPromptIsOneIteration) {
  auto p = reference_profile();
  for (Tokens len : {1, 100, 1024}) {
    EXPECT_DOUBLE_EQ(estimate_prefill_execution_ms(p, len, 1024, 16),
                     iteration_time_ms(p, len, 16));
  }
}

TEST(QueueEstimate, EmptyQueueIsZero) {
  auto p = reference_profile();
  EXPECT_DOUBLE_EQ(estimate_queue_time_ms(p, {}, 1024, 16), 0.0);
}

TEST(QueueEstimate, SingleAndTwoElementSums) {
  auto p = reference_profile();
  std::vector<Tokens> one{1024};
  EXPECT_NEAR(estimate_queue_time_ms(p, one, 1024, 16), 248.8, 1e-9);
  std::vector<Tokens> two{1024, 512};
  EXPECT_NEAR(estimate_queue_time_ms(p, two, 1024, 16), 248.8 + (44.0 + 0.2 * 512), 1e-9);
}

TEST(QueueEstimate, PermutationInvariant) {
  auto p = reference_profile();
  std::vector<Tokens> q{900, 13, 2048, 512, 77};
  double base = estimate_queue_time_ms(p, q, 700, 12);
  std::sort(q.begin(), q.end());
  do {
    EXPECT_NEAR(estimate_queue_time_ms(p, q, 700, 12), base, 1e-9);
  } while (std::next_permutation(q.begin(), q.end()));
}

TEST(TransferTime, ZeroTokensIsFree) {
  EXPECT_DOUBLE_EQ(transfer_time_ms(reference_profile(), 0), 0.0);
}

TEST(TransferTime, ReferenceArithmetic) {
  // 160 KiB/token over 78,643,200 B/ms: 3000 tokens move in exactly 6.25 ms.
  auto p = reference_profile();
  p.kv_bytes_per_token = 163'840;
  p.link_bandwidth_bytes_per_ms = 78'643'200.0;
  EXPECT_DOUBLE_EQ(transfer_time_ms(p, 3000), 6.25);
}

TEST(TransferTime, Homogeneous) {
  auto p = reference_profile();
  for (Tokens t : {1, 10, 999, 12345}) {
    EXPECT_NEAR(transfer_time_ms(p, 2 * t), 2.0 * transfer_time_ms(p, t), 1e-9);
  }
}

TEST(Profile, ValidationRejectsBadFields) {
  auto ok = reference_profile();
  EXPECT_NO_THROW(ok.validate());
  auto p = ok;
  p.base_iter_ms = 0.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = ok;
  p.per_prefill_token_ms = -1.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = ok;
  p.per_prefill_token_ms = p.base_iter_ms * 2;  // a token cannot cost more than an iteration
  EXPECT_THROW(p.validate(), ConfigError);
  p = ok;
  p.per_decode_req_ms = 0.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = ok;
  p.kv_bytes_per_token = 0;
  EXPECT_THROW(p.validate(), ConfigError);
}

}  // namespace
