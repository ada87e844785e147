// Copyright 2026 the pdsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "pdsim/engine.hpp"
#include "pdsim/types.hpp"

namespace pdsim {

struct SloConfig {
  double ttft_ms = 6000.0;
  double tpot_ms = 100.0;
  double attainment_target = 0.90;

  void validate() const {
    if (!(ttft_ms > 0.0)) throw ConfigError("slo.ttft_ms: must be > 0");
    if (!(tpot_ms > 0.0)) throw ConfigError("slo.tpot_ms: must be > 0");
    if (!(attainment_target > 0.0 && attainment_target <= 1.0))
      throw ConfigError("slo.attainment_target: must be in (0, 1]");
  }
};

/// Arrival to user-visible first token: prefill queue + execution + transfer
/// + decode-queue wait, all of which the recorded timestamps cover.
inline double compute_ttft(const RequestLifecycle& lc) {
  if (lc.first_token_ms < 0.0) throw std::invalid_argument("compute_ttft: no first token recorded");
  return lc.first_token_ms - lc.arrival_ms;
}

/// Decode wall time per token after the first; a single-token output streams
/// nothing and is defined as 0.
inline double compute_tpot(const RequestLifecycle& lc) {
  if (lc.output_len <= 1) return 0.0;
  if (lc.completion_ms < 0.0) throw std::invalid_argument("compute_tpot: request not complete");
  return (lc.completion_ms - lc.first_token_ms) / static_cast<double>(lc.output_len - 1);
}

/// Prefill tokens co-scheduled during the request's decode, per output token.
inline double interference_intensity(Tokens co_scheduled_prefill_tokens, Tokens output_len) {
  if (output_len < 1) throw std::invalid_argument("interference_intensity: output_len < 1");
  return static_cast<double>(co_scheduled_prefill_tokens) / static_cast<double>(output_len);
}

inline double interference_intensity(const RequestLifecycle& lc) {
  return interference_intensity(lc.co_scheduled_prefill_tokens, lc.output_len);
}

/// Linear-interpolated percentile; p in [0, 1]. Empty input -> 0.
inline double percentile(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  double rank = p * static_cast<double>(values.size() - 1);
  std::size_t idx = static_cast<std::size_t>(rank);
  double frac = rank - static_cast<double>(idx);
  if (idx + 1 < values.size()) return values[idx] * (1.0 - frac) + values[idx + 1] * frac;
  return values.back();
}

struct RequestMetrics {
  RequestId id = kNoRequest;
  Tokens prompt_len = 0;
  Tokens output_len = 0;
  double arrival_ms = 0.0;
  double ttft_ms = 0.0;
  double tpot_ms = 0.0;
  double interference_intensity = 0.0;
  double prefill_queue_ms = 0.0;
  double prefill_exec_ms = 0.0;
  double transfer_ms = 0.0;
  double decode_queue_ms = 0.0;
  double completion_ms = 0.0;
  InstanceId prefill_instance = kNoInstance;
  InstanceId decode_instance = kNoInstance;
  int migration_count = 0;
  int backflow_count = 0;
  bool slo_ok = false;
};

struct AggregateMetrics {
  std::size_t completed = 0;
  std::size_t rejected = 0;
  double attainment = 0.0;  // SLO-satisfied over (completed + rejected)
  double p50_ttft_ms = 0.0, p90_ttft_ms = 0.0, p99_ttft_ms = 0.0;
  double p50_tpot_ms = 0.0, p90_tpot_ms = 0.0, p99_tpot_ms = 0.0;
  double p90_prefill_queue_ms = 0.0;
  double p90_decode_queue_ms = 0.0;
  double mean_intensity = 0.0;
  long long migrations_init = 0, migrations_degrade = 0, migrations_backflow = 0;
  long long fallback_assignments = 0;
  double sim_end_ms = 0.0;
};

struct MetricsReport {
  SloConfig slo;
  std::vector<RequestMetrics> per_request;  // completed requests, arrival order
  AggregateMetrics agg;
};

inline MetricsReport build_report(const SimulationResult& sim, const SloConfig& slo) {
  slo.validate();
  MetricsReport report;
  report.slo = slo;
  std::vector<double> ttfts, tpots, pqueues, dqueues;
  double intensity_sum = 0.0;
  std::size_t satisfied = 0;
  for (const auto& lc : sim.lifecycles) {
    if (lc.rejected) continue;
    RequestMetrics m;
    m.id = lc.id;
    m.prompt_len = lc.prompt_len;
    m.output_len = lc.output_len;
    m.arrival_ms = lc.arrival_ms;
    m.ttft_ms = compute_ttft(lc);
    m.tpot_ms = compute_tpot(lc);
    m.interference_intensity = interference_intensity(lc);
    m.prefill_queue_ms = lc.prefill_start_ms - lc.arrival_ms;
    m.prefill_exec_ms = lc.prefill_end_ms - lc.prefill_start_ms;
    m.transfer_ms = lc.transfer_ms;
    m.decode_queue_ms = lc.decode_queue_ms;
    m.completion_ms = lc.completion_ms;
    m.prefill_instance = lc.prefill_instance;
    m.decode_instance = lc.decode_instance;
    m.migration_count = static_cast<int>(lc.migrations.size());
    m.backflow_count = lc.backflow_count;
    m.slo_ok = m.ttft_ms <= slo.ttft_ms && m.tpot_ms <= slo.tpot_ms;
    if (m.slo_ok) ++satisfied;
    ttfts.push_back(m.ttft_ms);
    tpots.push_back(m.tpot_ms);
    pqueues.push_back(m.prefill_queue_ms);
    dqueues.push_back(m.decode_queue_ms);
    intensity_sum += m.interference_intensity;
    report.per_request.push_back(m);
  }
  auto& agg = report.agg;
  agg.completed = report.per_request.size();
  agg.rejected = static_cast<std::size_t>(sim.rejected);
  std::size_t denom = agg.completed + agg.rejected;
  agg.attainment = denom == 0 ? 0.0 : static_cast<double>(satisfied) / static_cast<double>(denom);
  agg.p50_ttft_ms = percentile(ttfts, 0.50);
  agg.p90_ttft_ms = percentile(ttfts, 0.90);
  agg.p99_ttft_ms = percentile(ttfts, 0.99);
  agg.p50_tpot_ms = percentile(tpots, 0.50);
  agg.p90_tpot_ms = percentile(tpots, 0.90);
  agg.p99_tpot_ms = percentile(tpots, 0.99);
  agg.p90_prefill_queue_ms = percentile(pqueues, 0.90);
  agg.p90_decode_queue_ms = percentile(dqueues, 0.90);
  agg.mean_intensity = agg.completed == 0 ? 0.0 : intensity_sum / static_cast<double>(agg.completed);
  agg.migrations_init = sim.migrations_init;
  agg.migrations_degrade = sim.migrations_degrade;
  agg.migrations_backflow = sim.migrations_backflow;
  agg.fallback_assignments = sim.fallback_assignments;
  agg.sim_end_ms = sim.sim_end_ms;
  return report;
}

/// Analytic prefill throughput of a set of instances at reference conditions:
/// tokens of a reference-length prompt divided by its estimated chunked
/// execution time, summed over prefill-capable instances. Decode-hosting
/// instances are priced with the assumed co-resident batch; dedicated prefill
/// instances (which host no decodes) with batch 0.
inline double prefill_capacity_tokens_per_s(std::span<const InstanceSpec> instances,
                                            const CalibrationProfile& profile,
                                            Tokens reference_prompt, int assumed_decode_reqs) {
  double total = 0.0;
  for (const auto& inst : instances) {
    if (inst.chunk_size < 1) continue;
    int batch = inst.kind == InstanceKind::PHeavy && assumed_decode_reqs == 0
                    ? 0
                    : assumed_decode_reqs;
    double exec_ms =
        estimate_prefill_execution_ms(profile, reference_prompt, inst.chunk_size, batch);
    total += static_cast<double>(reference_prompt) / exec_ms * 1000.0;
  }
  return total;
}

struct GoodputPoint {
  double qps = 0.0;
  double mean_attainment = 0.0;
  std::vector<double> per_seed_attainment;
  bool passed = false;
  std::string error;  // non-empty when a run at this point failed
};

struct GoodputResult {
  double goodput_qps = 0.0;  // 0 when even the lowest grid point fails
  std::vector<GoodputPoint> points;
};

/// Grid scan for the highest sustainable rate: evaluates every point
/// (attainment averaged over seeds) and returns the highest passing QPS.
/// Non-monotone attainment across the grid is honored literally.
inline GoodputResult goodput_search(
    std::span<const double> qps_grid, std::span<const std::uint64_t> seeds,
    double attainment_target,
    const std::function<double(double qps, std::uint64_t seed)>& attainment_fn) {
  if (qps_grid.empty()) throw std::invalid_argument("goodput_search: empty QPS grid");
  if (seeds.empty()) throw std::invalid_argument("goodput_search: empty seed set");
  for (std::size_t i = 1; i < qps_grid.size(); ++i)
    if (!(qps_grid[i] > qps_grid[i - 1]))
      throw std::invalid_argument("goodput_search: QPS grid must be strictly increasing");
  GoodputResult result;
  for (double qps : qps_grid) {
    GoodputPoint point;
    point.qps = qps;
    double sum = 0.0;
    for (std::uint64_t seed : seeds) {
      double a = attainment_fn(qps, seed);
      point.per_seed_attainment.push_back(a);
      sum += a;
    }
    point.mean_attainment = sum / static_cast<double>(seeds.size());
    point.passed = point.mean_attainment >= attainment_target;
    if (point.passed) result.goodput_qps = qps;
    result.points.push_back(std::move(point));
  }
  return result;
}

}  // namespace pdsim
