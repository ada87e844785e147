// Copyright 2026 the pdsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

#include "pdsim/types.hpp"

namespace pdsim {

/// Coefficients of the analytic batch-execution-time model. Iteration time is
/// affine in the number of piggybacked prefill tokens and in the decode batch
/// size; KV transfers are sized by kv_bytes_per_token and move at
/// link_bandwidth_bytes_per_ms.
struct CalibrationProfile {
  double base_iter_ms = 44.0;           // decode-only iteration at the reference batch
  double per_prefill_token_ms = 0.2;    // marginal cost per piggybacked prefill token
  double per_decode_req_ms = 0.05;      // marginal cost per decode request beyond reference
  int ref_decode_batch = 16;            // batch size at which base_iter_ms was measured
  std::int64_t kv_bytes_per_token = 163'840;
  double link_bandwidth_bytes_per_ms = 78'643'200.0;

  void validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("profile." + msg); };
    if (!(base_iter_ms > 0.0)) fail("base_iter_ms: must be > 0");
    if (!(per_prefill_token_ms > 0.0)) fail("per_prefill_token_ms: must be > 0");
    if (!(per_decode_req_ms > 0.0)) fail("per_decode_req_ms: must be > 0");
    if (ref_decode_batch <= 0) fail("ref_decode_batch: must be > 0");
    if (kv_bytes_per_token <= 0) fail("kv_bytes_per_token: must be > 0");
    if (!(link_bandwidth_bytes_per_ms > 0.0)) fail("link_bandwidth_bytes_per_ms: must be > 0");
    if (per_prefill_token_ms > base_iter_ms)
      fail("per_prefill_token_ms: must not exceed base_iter_ms");
  }
};

/// Wall time of one mixed batch iteration. Affine in both arguments; for
/// decode batches smaller than the reference the linear extrapolation is
/// floored at per_decode_req_ms per request so it can never go non-positive.
inline double iteration_time_ms(const CalibrationProfile& p, Tokens prefill_tokens,
                                int decode_reqs) {
  if (prefill_tokens < 0 || decode_reqs < 0)
    throw std::invalid_argument("iteration_time_ms: negative batch component");
  if (prefill_tokens == 0 && decode_reqs == 0)
    throw std::invalid_argument("iteration_time_ms: empty batch (no work scheduled)");
  double t = p.base_iter_ms + p.per_prefill_token_ms * static_cast<double>(prefill_tokens) +
             p.per_decode_req_ms * static_cast<double>(decode_reqs - p.ref_decode_batch);
  if (t <= 0.0) t = p.per_decode_req_ms * static_cast<double>(decode_reqs);
  return t;
}

/// Execution time of a whole prompt processed in chunk_size pieces: one
/// iteration per chunk, the last chunk carrying the remainder, each priced
/// with the given co-resident decode batch.
inline double estimate_prefill_execution_ms(const CalibrationProfile& p, Tokens prompt_len,
                                            Tokens chunk_size, int assumed_decode_reqs) {
  if (prompt_len < 1) throw std::invalid_argument("estimate_prefill_execution_ms: prompt_len < 1");
  if (chunk_size < 1) throw std::invalid_argument("estimate_prefill_execution_ms: chunk_size < 1");
  Tokens full_chunks = prompt_len / chunk_size;
  Tokens tail = prompt_len % chunk_size;
  double total = static_cast<double>(full_chunks) *
                 iteration_time_ms(p, chunk_size, assumed_decode_reqs);
  if (tail > 0) total += iteration_time_ms(p, tail, assumed_decode_reqs);
  return total;
}

/// Total estimated execution time of every queued prompt; empty queue -> 0.
inline double estimate_queue_time_ms(const CalibrationProfile& p,
                                     std::span<const Tokens> queued_prompts, Tokens chunk_size,
                                     int assumed_decode_reqs) {
  double total = 0.0;
  for (Tokens len : queued_prompts)
    total += estimate_prefill_execution_ms(p, len, chunk_size, assumed_decode_reqs);
  return total;
}

/// KV movement time between instances: size / bandwidth.
inline double transfer_time_ms(const CalibrationProfile& p, Tokens context_tokens) {
  if (context_tokens < 0) throw std::invalid_argument("transfer_time_ms: negative context");
  return static_cast<double>(context_tokens) * static_cast<double>(p.kv_bytes_per_token) /
         p.link_bandwidth_bytes_per_ms;
}

}  // namespace pdsim
