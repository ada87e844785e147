// Copyright 2026 the pdsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pdsim/config.hpp"
#include "pdsim/engine.hpp"
#include "pdsim/metrics.hpp"

namespace pdsim {

/// Runs fn(i) for i in [0, n) on up to `jobs` worker threads. Each index is
/// independent; results must be written to pre-sized slots so the outcome is
/// identical to sequential execution.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
  };
  std::vector<std::thread> pool;
  std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  pool.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

/// Length records for a run: from the trace file or the synthetic generator,
/// then filtered to the configured caps.
inline std::vector<TraceRecord> build_records(const ExperimentConfig& cfg) {
  std::vector<TraceRecord> records;
  if (cfg.workload.trace_path) {
    records = load_trace(*cfg.workload.trace_path);
  } else {
    SyntheticTraceParams params = cfg.workload.synthetic_overrides
                                      ? *cfg.workload.synthetic_overrides
                                      : (*cfg.workload.synthetic_profile == "long_doc"
                                             ? long_doc_params()
                                             : short_chat_params());
    records = generate_synthetic_trace(cfg.workload.synthetic_n, params, cfg.workload.spec.seed);
  }
  records = filter_lengths(records, cfg.workload.spec.max_prompt_len,
                           cfg.workload.spec.max_output_len);
  if (records.empty())
    throw ConfigError("workload: no records survive the length filters");
  return records;
}

struct RunOutcome {
  SimulationResult sim;
  MetricsReport report;
};

/// One full simulation with explicit stack/cluster/seed (the building block
/// for modes, sweeps, and ablation stages).
inline RunOutcome run_once(const ExperimentConfig& cfg, const PolicyStack& stack,
                           const ClusterConfig& cluster, std::uint64_t seed,
                           bool record_iteration_log = false) {
  WorkloadSpec spec = cfg.workload.spec;
  spec.seed = seed;
  ExperimentConfig effective = cfg;
  effective.workload.spec = spec;
  std::vector<TraceRecord> records = build_records(effective);

  EngineInputs in;
  in.instances = make_instances(cluster);
  in.stack = stack;
  in.flow = cfg.policy;
  in.profile = cfg.profile;
  in.ttft_slo_ms = cfg.slo.ttft_ms;
  in.tpot_slo_ms = cfg.slo.tpot_ms;
  in.arrivals = generate_arrivals(spec, records);
  in.fallback_seed = seed;
  in.record_iteration_log = record_iteration_log;

  RunOutcome out;
  out.sim = run_simulation(in);
  out.report = build_report(out.sim, cfg.slo);
  return out;
}

inline RunOutcome run_experiment(const ExperimentConfig& cfg,
                                 std::optional<std::uint64_t> seed_override = std::nullopt,
                                 bool record_iteration_log = false) {
  cfg.validate();
  PolicyStack stack = make_stack(cfg.mode, cfg.policy, cfg.early_reject);
  std::uint64_t seed = seed_override.value_or(cfg.workload.spec.seed);
  return run_once(cfg, stack, cfg.cluster, seed, record_iteration_log);
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepAxis { RPD, SP, SD, QPS };

inline SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "r_pd") return SweepAxis::RPD;
  if (s == "s_p") return SweepAxis::SP;
  if (s == "s_d") return SweepAxis::SD;
  if (s == "qps") return SweepAxis::QPS;
  throw ConfigError("sweep axis: expected r_pd | s_p | s_d | qps, got \"" + s + "\"");
}

struct SweepRow {
  std::string value;
  bool ok = false;
  std::string error;
  double attainment = 0.0;
  double p90_ttft_ms = 0.0;
  double p90_tpot_ms = 0.0;
  double p90_prefill_queue_ms = 0.0;
  long long migrations_degrade = 0;
  long long migrations_backflow = 0;
};

/// Applies one axis value to a config copy. R_PD values are "P:D" pairs;
/// chunk sizes and QPS are numbers.
inline ExperimentConfig apply_sweep_value(const ExperimentConfig& base, SweepAxis axis,
                                          const std::string& value) {
  ExperimentConfig cfg = base;
  try {
    switch (axis) {
      case SweepAxis::RPD: {
        auto colon = value.find(':');
        if (colon == std::string::npos) throw std::invalid_argument("expected P:D");
        cfg.cluster.n_p_heavy = std::stoi(value.substr(0, colon));
        cfg.cluster.n_d_heavy = std::stoi(value.substr(colon + 1));
        break;
      }
      case SweepAxis::SP: cfg.cluster.s_p = std::stoll(value); break;
      case SweepAxis::SD: cfg.cluster.s_d = std::stoll(value); break;
      case SweepAxis::QPS: cfg.workload.spec.qps = std::stod(value); break;
    }
  } catch (const std::exception&) {
    throw ConfigError("sweep value \"" + value + "\": cannot parse for this axis");
  }
  return cfg;
}

inline std::vector<SweepRow> run_sweep(const ExperimentConfig& base, SweepAxis axis,
                                       const std::vector<std::string>& values, int jobs = 1,
                                       std::optional<std::uint64_t> seed_override = std::nullopt) {
  if (values.empty()) throw ConfigError("sweep: empty value list");
  std::vector<SweepRow> rows(values.size());
  parallel_for(values.size(), jobs, [&](std::size_t i) {
    SweepRow& row = rows[i];
    row.value = values[i];
    try {
      ExperimentConfig cfg = apply_sweep_value(base, axis, values[i]);
      cfg.validate();
      RunOutcome out = run_experiment(cfg, seed_override);
      row.ok = true;
      row.attainment = out.report.agg.attainment;
      row.p90_ttft_ms = out.report.agg.p90_ttft_ms;
      row.p90_tpot_ms = out.report.agg.p90_tpot_ms;
      row.p90_prefill_queue_ms = out.report.agg.p90_prefill_queue_ms;
      row.migrations_degrade = out.report.agg.migrations_degrade;
      row.migrations_backflow = out.report.agg.migrations_backflow;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
  });
  return rows;
}

// ---------------------------------------------------------------------------
// Goodput search

inline std::vector<std::uint64_t> default_seeds(std::uint64_t base, std::size_t count) {
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < count; ++i) seeds.push_back(base + i);
  return seeds;
}

/// Full-simulation goodput scan over the grid; every (QPS, seed) cell is one
/// independent run, evaluated in parallel, then merged in grid order. A
/// failed run counts as attainment 0 at that point.
inline GoodputResult run_goodput(const ExperimentConfig& cfg, const std::vector<double>& qps_grid,
                                 const std::vector<std::uint64_t>& seeds, int jobs = 1) {
  cfg.validate();
  std::vector<double> cells(qps_grid.size() * seeds.size(), 0.0);
  std::vector<std::string> errors(cells.size());
  parallel_for(cells.size(), jobs, [&](std::size_t i) {
    std::size_t gi = i / seeds.size();
    std::size_t si = i % seeds.size();
    try {
      ExperimentConfig point = cfg;
      point.workload.spec.qps = qps_grid[gi];
      cells[i] = run_experiment(point, seeds[si]).report.agg.attainment;
    } catch (const std::exception& e) {
      errors[i] = e.what();
      cells[i] = 0.0;
    }
  });
  GoodputResult result =
      goodput_search(qps_grid, seeds, cfg.slo.attainment_target,
                     [&](double qps, std::uint64_t seed) {
                       std::size_t gi = 0, si = 0;
                       while (qps_grid[gi] != qps) ++gi;
                       while (seeds[si] != seed) ++si;
                       return cells[gi * seeds.size() + si];
                     });
  for (std::size_t gi = 0; gi < qps_grid.size(); ++gi)
    for (std::size_t si = 0; si < seeds.size(); ++si)
      if (!errors[gi * seeds.size() + si].empty())
        result.points[gi].error = errors[gi * seeds.size() + si];
  return result;
}

// ---------------------------------------------------------------------------
// Staged ablation

struct BreakdownRow {
  std::string stage;
  double mean_attainment = 0.0;
  std::vector<double> per_seed_attainment;
  double mean_p90_ttft_ms = 0.0;
  double mean_p90_tpot_ms = 0.0;
  long long migrations_degrade = 0;
  long long migrations_backflow = 0;
  long long migrations_init = 0;
};

/// Four staged configurations: a uniform small-chunk baseline, the
/// differentiated-chunk architecture under naive routing (round-robin prefill,
/// in-place decode), then flowing decode, then length-aware prefill on top.
inline std::vector<BreakdownRow> run_breakdown(const ExperimentConfig& cfg, Tokens small_chunk,
                                               const std::vector<std::uint64_t>& seeds,
                                               int jobs = 1) {
  cfg.validate();
  if (small_chunk < 1) throw ConfigError("breakdown: small_chunk must be >= 1");

  struct Stage {
    std::string name;
    PolicyStack stack;
    ClusterConfig cluster;
  };
  std::vector<Stage> stages;
  ClusterConfig uniform = cfg.cluster;
  uniform.s_p = small_chunk;
  uniform.s_d = small_chunk;
  stages.push_back({"cp_small", {PrefillRouting::RoundRobin, DecodePlacement::InPlace, false, false},
                    uniform});
  stages.push_back({"arch", {PrefillRouting::RoundRobin, DecodePlacement::InPlace, false, false},
                    cfg.cluster});
  stages.push_back({"flowing_decode",
                    {PrefillRouting::RoundRobin, DecodePlacement::FlowToDHeavy, true, false},
                    cfg.cluster});
  stages.push_back({"length_aware_prefill",
                    {PrefillRouting::LengthAware, DecodePlacement::FlowToDHeavy, true, false},
                    cfg.cluster});

  std::vector<BreakdownRow> rows(stages.size());
  std::vector<MetricsReport> reports(stages.size() * seeds.size());
  std::vector<std::string> errors(reports.size());
  parallel_for(reports.size(), jobs, [&](std::size_t i) {
    std::size_t stage_i = i / seeds.size();
    std::size_t seed_i = i % seeds.size();
    try {
      reports[i] =
          run_once(cfg, stages[stage_i].stack, stages[stage_i].cluster, seeds[seed_i]).report;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t si = 0; si < stages.size(); ++si) {
    BreakdownRow& row = rows[si];
    row.stage = stages[si].name;
    double att = 0.0, ttft = 0.0, tpot = 0.0;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      const auto& rep = reports[si * seeds.size() + k];
      if (!errors[si * seeds.size() + k].empty())
        throw EngineError("breakdown stage " + row.stage + " failed: " +
                          errors[si * seeds.size() + k]);
      row.per_seed_attainment.push_back(rep.agg.attainment);
      att += rep.agg.attainment;
      ttft += rep.agg.p90_ttft_ms;
      tpot += rep.agg.p90_tpot_ms;
      row.migrations_degrade += rep.agg.migrations_degrade;
      row.migrations_backflow += rep.agg.migrations_backflow;
      row.migrations_init += rep.agg.migrations_init;
    }
    double n = static_cast<double>(seeds.size());
    row.mean_attainment = att / n;
    row.mean_p90_ttft_ms = ttft / n;
    row.mean_p90_tpot_ms = tpot / n;
  }
  return rows;
}

}  // namespace pdsim
