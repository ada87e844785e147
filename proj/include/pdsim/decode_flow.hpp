// Copyright 2026 the pdsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "pdsim/types.hpp"

namespace pdsim {

/// What the per-iteration decode scheduler sees of one resident request. The
/// output-length counter and elapsed clock are the scheduler-visible,
/// resettable pair; first_token_ms is the true lifecycle timestamp and is
/// only used to break ties.
struct DecodeView {
  RequestId request_id = kNoRequest;
  Tokens current_output_len = 1;
  double decode_elapsed_ms = 0.0;
  double current_tpot_ms = 0.0;  // decode_elapsed_ms / max(current_output_len - 1, 1)
  Tokens kv_footprint = 0;
  double first_token_ms = 0.0;
};

inline double scheduler_tpot_ms(double decode_elapsed_ms, Tokens current_output_len) {
  Tokens denom = current_output_len - 1;
  if (denom < 1) denom = 1;
  return decode_elapsed_ms / static_cast<double>(denom);
}

struct FlowPolicy {
  double watermark_m = 0.95;           // KV-usage fraction that triggers offloading
  double approach_factor_alpha = 0.96; // backflow when tpot exceeds alpha * SLO
  bool migration_enabled = true;       // master switch; off = decode always stays in place

  void validate() const {
    if (!(watermark_m > 0.0 && watermark_m < 1.0))
      throw ConfigError("policy.watermark: must be in (0, 1)");
    if (!(approach_factor_alpha > 0.0 && approach_factor_alpha < 1.0))
      throw ConfigError("policy.approach_factor: must be in (0, 1)");
  }
};

struct DHeavyDecodeState {
  InstanceId id = kNoInstance;
  Tokens kv_used = 0;
  Tokens kv_capacity = 0;
  std::vector<DecodeView> running;
};

/// Longest-first offload selection for a D-heavy instance over the watermark:
/// repeatedly takes the request with the largest current output length
/// (ties: earliest first token, then lowest id) until the released footprint
/// brings usage back under the watermark. Empty when usage is at or below it.
inline std::vector<RequestId> select_degrade(const DHeavyDecodeState& state,
                                             const FlowPolicy& policy) {
  std::vector<RequestId> selected;
  const double limit = policy.watermark_m * static_cast<double>(state.kv_capacity);
  Tokens released = 0;
  std::vector<bool> taken(state.running.size(), false);
  while (static_cast<double>(state.kv_used - released) > limit) {
    int best = -1;
    for (int i = 0; i < static_cast<int>(state.running.size()); ++i) {
      if (taken[i]) continue;
      if (best < 0) {
        best = i;
        continue;
      }
      const DecodeView& a = state.running[i];
      const DecodeView& b = state.running[best];
      if (a.current_output_len > b.current_output_len ||
          (a.current_output_len == b.current_output_len &&
           (a.first_token_ms < b.first_token_ms ||
            (a.first_token_ms == b.first_token_ms && a.request_id < b.request_id))))
        best = i;
    }
    if (best < 0) break;  // nothing left to offload
    taken[best] = true;
    selected.push_back(state.running[best].request_id);
    released += state.running[best].kv_footprint;
  }
  return selected;
}

/// Backflow selection on a P-heavy instance: every migrated decode whose
/// scheduler-visible TPOT has crossed alpha * SLO (strictly) flows back.
inline std::vector<RequestId> select_backflow(std::span<const DecodeView> migrated_decodes,
                                              double tpot_slo_ms, const FlowPolicy& policy) {
  std::vector<RequestId> selected;
  const double threshold = policy.approach_factor_alpha * tpot_slo_ms;
  for (const auto& view : migrated_decodes)
    if (view.current_tpot_ms > threshold) selected.push_back(view.request_id);
  return selected;
}

}  // namespace pdsim
