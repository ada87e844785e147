// Copyright 2026 the pdsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "pdsim/cost_model.hpp"
#include "pdsim/rng.hpp"
#include "pdsim/types.hpp"

namespace pdsim {

/// What the proxy sees of one instance when a request arrives.
struct InstanceSnapshot {
  InstanceId id = kNoInstance;
  InstanceKind kind = InstanceKind::PHeavy;
  Tokens chunk_size = 0;
  int running_decode_count = 0;
  std::vector<Tokens> queued_prefill_remaining;  // FIFO; head = remaining tokens of the
                                                 // partially processed prompt, if any
  Tokens queued_tokens() const {
    Tokens t = 0;
    for (Tokens v : queued_prefill_remaining) t += v;
    return t;
  }
};

struct FeasibilityEstimate {
  InstanceId instance_id = kNoInstance;
  double q_ms = 0.0;  // estimated drain time of the queued prefills
  double e_ms = 0.0;  // estimated execution time of the new prompt
  double t_ms = 0.0;  // KV transfer to the decode side; only P-heavy pays it
  bool feasible = false;
};

/// Projected TTFT components of the prompt on one instance. Instances that
/// cannot run prefill at all (chunk size 0) are reported infeasible.
inline FeasibilityEstimate estimate_feasibility(Tokens prompt_len, const InstanceSnapshot& inst,
                                                const CalibrationProfile& profile,
                                                double ttft_slo_ms) {
  FeasibilityEstimate est;
  est.instance_id = inst.id;
  if (inst.chunk_size < 1) return est;
  est.q_ms = estimate_queue_time_ms(profile, inst.queued_prefill_remaining, inst.chunk_size,
                                    inst.running_decode_count);
  est.e_ms = estimate_prefill_execution_ms(profile, prompt_len, inst.chunk_size,
                                           inst.running_decode_count);
  est.t_ms = inst.kind == InstanceKind::PHeavy ? transfer_time_ms(profile, prompt_len) : 0.0;
  est.feasible = est.q_ms + est.e_ms + est.t_ms < ttft_slo_ms;
  return est;
}

/// Length-aware prefill placement: among instances whose projected
/// queue + execution (+ transfer) stays inside the TTFT SLO, pick the one
/// with the fewest queued prefill tokens; ties go to the lowest id. Returns
/// nullopt when no instance is feasible.
inline std::optional<InstanceId> schedule_prefill(Tokens prompt_len,
                                                  std::span<const InstanceSnapshot> instances,
                                                  const CalibrationProfile& profile,
                                                  double ttft_slo_ms) {
  std::optional<InstanceId> best;
  Tokens best_tokens = 0;
  for (const auto& inst : instances) {
    FeasibilityEstimate est = estimate_feasibility(prompt_len, inst, profile, ttft_slo_ms);
    if (!est.feasible) continue;
    Tokens queued = inst.queued_tokens();
    if (!best || queued < best_tokens || (queued == best_tokens && inst.id < *best)) {
      best = inst.id;
      best_tokens = queued;
    }
  }
  return best;
}

/// Uniform random choice over instances that admit prefill, used when no
/// instance is feasible. Driven by the run's seeded generator.
inline InstanceId fallback_assign(std::span<const InstanceSnapshot> instances, Rng& rng) {
  std::vector<InstanceId> eligible;
  for (const auto& inst : instances)
    if (inst.chunk_size > 0) eligible.push_back(inst.id);
  if (eligible.empty())
    throw ConfigError("fallback_assign: no instance admits prefill (all chunk sizes are 0)");
  return eligible[rng.uniform_index(eligible.size())];
}

/// Baseline router with no load or length awareness: cycles over the
/// prefill-capable instances in id order.
class RoundRobinRouter {
 public:
  InstanceId next(std::span<const InstanceSnapshot> instances) {
    std::vector<InstanceId> eligible;
    for (const auto& inst : instances)
      if (inst.chunk_size > 0) eligible.push_back(inst.id);
    if (eligible.empty())
      throw ConfigError("round-robin: no instance admits prefill (all chunk sizes are 0)");
    return eligible[counter_++ % eligible.size()];
  }

 private:
  std::size_t counter_ = 0;
};

}  // namespace pdsim
