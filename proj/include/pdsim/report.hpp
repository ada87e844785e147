// Copyright 2026 the pdsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "pdsim/config.hpp"
#include "pdsim/engine.hpp"
#include "pdsim/metrics.hpp"

namespace pdsim {

inline std::string fmt_ms(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline nlohmann::json report_to_json(const MetricsReport& report, const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["config"] = to_json(cfg);
  const auto& a = report.agg;
  j["aggregates"] = {{"completed", a.completed},
                     {"rejected", a.rejected},
                     {"attainment", a.attainment},
                     {"p50_ttft_ms", a.p50_ttft_ms},
                     {"p90_ttft_ms", a.p90_ttft_ms},
                     {"p99_ttft_ms", a.p99_ttft_ms},
                     {"p50_tpot_ms", a.p50_tpot_ms},
                     {"p90_tpot_ms", a.p90_tpot_ms},
                     {"p99_tpot_ms", a.p99_tpot_ms},
                     {"p90_prefill_queue_ms", a.p90_prefill_queue_ms},
                     {"p90_decode_queue_ms", a.p90_decode_queue_ms},
                     {"mean_interference_intensity", a.mean_intensity},
                     {"migrations_init", a.migrations_init},
                     {"migrations_degrade", a.migrations_degrade},
                     {"migrations_backflow", a.migrations_backflow},
                     {"fallback_assignments", a.fallback_assignments},
                     {"sim_end_ms", a.sim_end_ms}};
  return j;
}

inline void write_report_json(const std::filesystem::path& path, const MetricsReport& report,
                              const ExperimentConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path.string());
  out << report_to_json(report, cfg).dump(2) << "\n";
}

/// Fixed column order; documented in the README.
inline constexpr const char* kRequestsCsvHeader =
    "id,arrival_ms,prompt_tokens,output_tokens,prefill_instance,decode_instance,"
    "ttft_ms,tpot_ms,interference_intensity,prefill_queue_ms,prefill_exec_ms,"
    "transfer_ms,decode_queue_ms,migrations,backflows,completion_ms,slo_ok";

inline void write_requests_csv(const std::filesystem::path& path, const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write per-request table: " + path.string());
  out << kRequestsCsvHeader << "\n";
  for (const auto& m : report.per_request) {
    out << m.id << ',' << fmt_ms(m.arrival_ms) << ',' << m.prompt_len << ',' << m.output_len
        << ',' << m.prefill_instance << ',' << m.decode_instance << ',' << fmt_ms(m.ttft_ms)
        << ',' << fmt_ms(m.tpot_ms) << ',' << fmt_ms(m.interference_intensity) << ','
        << fmt_ms(m.prefill_queue_ms) << ',' << fmt_ms(m.prefill_exec_ms) << ','
        << fmt_ms(m.transfer_ms) << ',' << fmt_ms(m.decode_queue_ms) << ',' << m.migration_count
        << ',' << m.backflow_count << ',' << fmt_ms(m.completion_ms) << ','
        << (m.slo_ok ? 1 : 0) << "\n";
  }
}

/// Line-delimited lifecycle milestones and migrations, one object per event.
inline void write_events_jsonl(const std::filesystem::path& path, const SimulationResult& sim) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write event trace: " + path.string());
  for (const auto& lc : sim.lifecycles) {
    auto line = [&](const char* kind, double t, const std::string& extra = "") {
      out << "{\"t_ms\": " << fmt_ms(t) << ", \"kind\": \"" << kind << "\", \"request\": "
          << lc.id << extra << "}\n";
    };
    if (lc.rejected) {
      line("rejected", lc.arrival_ms);
      continue;
    }
    line("arrival", lc.arrival_ms);
    line("prefill_assign", lc.prefill_assign_ms,
         ", \"instance\": " + std::to_string(lc.prefill_instance));
    line("prefill_start", lc.prefill_start_ms);
    line("prefill_end", lc.prefill_end_ms);
    for (const auto& m : lc.migrations) {
      line("migration", m.time_ms,
           ", \"from\": " + std::to_string(m.from) + ", \"to\": " + std::to_string(m.to) +
               ", \"reason\": \"" + to_string(m.reason) + "\"");
    }
    line("first_token", lc.first_token_ms);
    line("completion", lc.completion_ms,
         ", \"instance\": " + std::to_string(lc.decode_instance));
  }
}

}  // namespace pdsim
