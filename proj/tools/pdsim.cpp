// Copyright 2026 the pdsim authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: single runs, slider sweeps, goodput search, staged
// ablation, and synthetic trace generation.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pdsim/pdsim.hpp"

namespace fs = std::filesystem;
using namespace pdsim;

namespace {

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  bool early_reject = false;
  int jobs = 1;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_config = true) {
  auto* c = cmd->add_option("--config", opts.config_path, "experiment config (JSON)");
  if (needs_config) c->required();
  std::uint64_t seed_val = 0;
  (void)seed_val;
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&opts](const std::uint64_t& v) { opts.seed = v; }, "override workload seed");
  cmd->add_option_function<std::string>(
      "--out-dir", [&opts](const std::string& v) { opts.out_dir = v; },
      "override output directory");
  cmd->add_flag("--early-reject", opts.early_reject,
                "drop requests with no feasible instance instead of random fallback");
  cmd->add_option("--jobs", opts.jobs, "parallel worker threads for multi-run commands")
      ->check(CLI::PositiveNumber);
}

ExperimentConfig load_effective_config(const CommonOpts& opts) {
  ExperimentConfig cfg = load_config(opts.config_path);
  if (opts.seed) cfg.workload.spec.seed = *opts.seed;
  if (opts.out_dir) cfg.output.dir = *opts.out_dir;
  if (opts.early_reject) cfg.early_reject = true;
  cfg.validate();
  return cfg;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

int cmd_run(const CommonOpts& opts) {
  ExperimentConfig cfg = load_effective_config(opts);
  RunOutcome out = run_experiment(cfg);
  fs::create_directories(cfg.output.dir);
  write_report_json(fs::path(cfg.output.dir) / "report.json", out.report, cfg);
  write_requests_csv(fs::path(cfg.output.dir) / "requests.csv", out.report);
  if (cfg.output.events)
    write_events_jsonl(fs::path(cfg.output.dir) / "events.jsonl", out.sim);
  const auto& a = out.report.agg;
  std::printf("mode=%s requests=%zu rejected=%zu attainment=%.4f\n", to_string(cfg.mode),
              a.completed, a.rejected, a.attainment);
  std::printf("p90 ttft=%.1f ms (slo %.1f)  p90 tpot=%.2f ms (slo %.1f)\n", a.p90_ttft_ms,
              cfg.slo.ttft_ms, a.p90_tpot_ms, cfg.slo.tpot_ms);
  std::printf("migrations: init=%lld degrade=%lld backflow=%lld  fallback=%lld\n",
              a.migrations_init, a.migrations_degrade, a.migrations_backflow,
              a.fallback_assignments);
  std::printf("reports written to %s\n", cfg.output.dir.c_str());
  return 0;
}

int cmd_sweep(const CommonOpts& opts, const std::string& axis_str, const std::string& values_str) {
  ExperimentConfig cfg = load_effective_config(opts);
  SweepAxis axis = sweep_axis_from_string(axis_str);
  std::vector<std::string> values = split_csv(values_str);
  auto rows = run_sweep(cfg, axis, values, opts.jobs, opts.seed);
  fs::create_directories(cfg.output.dir);
  fs::path table = fs::path(cfg.output.dir) / "sweep.csv";
  {
    std::ofstream out(table);
    out << "value,ok,attainment,p90_ttft_ms,p90_tpot_ms,p90_prefill_queue_ms,"
           "migrations_degrade,migrations_backflow,error\n";
    for (const auto& r : rows)
      out << r.value << ',' << (r.ok ? 1 : 0) << ',' << fmt_ms(r.attainment) << ','
          << fmt_ms(r.p90_ttft_ms) << ',' << fmt_ms(r.p90_tpot_ms) << ','
          << fmt_ms(r.p90_prefill_queue_ms) << ',' << r.migrations_degrade << ','
          << r.migrations_backflow << ',' << r.error << "\n";
  }
  std::printf("%-12s %10s %14s %14s\n", axis_str.c_str(), "attain", "p90_ttft_ms", "p90_tpot_ms");
  for (const auto& r : rows) {
    if (r.ok)
      std::printf("%-12s %10.4f %14.1f %14.2f\n", r.value.c_str(), r.attainment, r.p90_ttft_ms,
                  r.p90_tpot_ms);
    else
      std::printf("%-12s FAILED: %s\n", r.value.c_str(), r.error.c_str());
  }
  std::printf("table written to %s\n", table.string().c_str());
  return 0;
}

int cmd_goodput(const CommonOpts& opts, const std::string& grid_str, const std::string& seeds_str) {
  ExperimentConfig cfg = load_effective_config(opts);
  std::vector<double> grid;
  for (const auto& v : split_csv(grid_str)) grid.push_back(std::stod(v));
  std::vector<std::uint64_t> seeds;
  if (!seeds_str.empty())
    for (const auto& v : split_csv(seeds_str)) seeds.push_back(std::stoull(v));
  else
    seeds = default_seeds(cfg.workload.spec.seed, 3);
  GoodputResult res = run_goodput(cfg, grid, seeds, opts.jobs);
  std::printf("%8s %12s %s\n", "qps", "attainment", "pass");
  for (const auto& p : res.points) {
    std::printf("%8.3f %12.4f %s%s\n", p.qps, p.mean_attainment, p.passed ? "yes" : "no",
                p.error.empty() ? "" : (" [" + p.error + "]").c_str());
  }
  std::printf("goodput=%.3f req/s at target %.2f over %zu seed(s)\n", res.goodput_qps,
              cfg.slo.attainment_target, seeds.size());
  fs::create_directories(cfg.output.dir);
  fs::path out_path = fs::path(cfg.output.dir) / "goodput.json";
  nlohmann::json j;
  j["goodput_qps"] = res.goodput_qps;
  j["attainment_target"] = cfg.slo.attainment_target;
  j["seeds"] = seeds;
  for (const auto& p : res.points)
    j["points"].push_back({{"qps", p.qps},
                           {"mean_attainment", p.mean_attainment},
                           {"per_seed", p.per_seed_attainment},
                           {"passed", p.passed},
                           {"error", p.error}});
  std::ofstream(out_path) << j.dump(2) << "\n";
  std::printf("written to %s\n", out_path.string().c_str());
  return 0;
}

int cmd_breakdown(const CommonOpts& opts, Tokens small_chunk, const std::string& seeds_str) {
  ExperimentConfig cfg = load_effective_config(opts);
  std::vector<std::uint64_t> seeds;
  if (!seeds_str.empty())
    for (const auto& v : split_csv(seeds_str)) seeds.push_back(std::stoull(v));
  else
    seeds = default_seeds(cfg.workload.spec.seed, 3);
  auto rows = run_breakdown(cfg, small_chunk, seeds, opts.jobs);
  std::printf("%-22s %10s %14s %14s %10s %10s\n", "stage", "attain", "p90_ttft_ms", "p90_tpot_ms",
              "degrades", "backflows");
  for (const auto& r : rows)
    std::printf("%-22s %10.4f %14.1f %14.2f %10lld %10lld\n", r.stage.c_str(),
                r.mean_attainment, r.mean_p90_ttft_ms, r.mean_p90_tpot_ms, r.migrations_degrade,
                r.migrations_backflow);
  fs::create_directories(cfg.output.dir);
  fs::path table = fs::path(cfg.output.dir) / "breakdown.csv";
  std::ofstream out(table);
  out << "stage,mean_attainment,mean_p90_ttft_ms,mean_p90_tpot_ms,migrations_init,"
         "migrations_degrade,migrations_backflow\n";
  for (const auto& r : rows)
    out << r.stage << ',' << fmt_ms(r.mean_attainment) << ',' << fmt_ms(r.mean_p90_ttft_ms) << ','
        << fmt_ms(r.mean_p90_tpot_ms) << ',' << r.migrations_init << ',' << r.migrations_degrade
        << ',' << r.migrations_backflow << "\n";
  std::printf("table written to %s\n", table.string().c_str());
  return 0;
}

int cmd_gen_trace(const std::string& out_path, const std::string& profile, std::size_t n,
                  std::uint64_t seed, bool with_arrivals, double qps) {
  SyntheticTraceParams params = profile == "long_doc" ? long_doc_params() : short_chat_params();
  auto records = generate_synthetic_trace(n, params, seed);
  if (with_arrivals) {
    WorkloadSpec spec;
    spec.qps = qps;
    spec.seed = seed;
    spec.n_requests = n;
    save_arrivals(out_path, generate_arrivals(spec, records));
  } else {
    save_trace(out_path, records);
  }
  std::printf("wrote %zu synthetic records to %s\n", n, out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"discrete-event simulator for multi-instance LLM serving schedulers"};
  app.require_subcommand(1);

  CommonOpts run_opts, sweep_opts, goodput_opts, breakdown_opts;

  auto* run = app.add_subcommand("run", "single simulation run; writes report + request table");
  add_common(run, run_opts);

  auto* sweep = app.add_subcommand("sweep", "one run per value along a config axis");
  add_common(sweep, sweep_opts);
  std::string axis, values;
  sweep->add_option("--axis", axis, "r_pd | s_p | s_d | qps")->required();
  sweep->add_option("--values", values, "comma-separated axis values (r_pd uses P:D)")->required();

  auto* goodput = app.add_subcommand("goodput", "grid scan for the highest sustainable rate");
  add_common(goodput, goodput_opts);
  std::string grid, gp_seeds;
  goodput->add_option("--qps-grid", grid, "comma-separated, strictly increasing QPS values")
      ->required();
  goodput->add_option("--seeds", gp_seeds, "comma-separated seeds (default: 3 from config seed)");

  auto* breakdown = app.add_subcommand("breakdown", "staged ablation of the scheduling techniques");
  add_common(breakdown, breakdown_opts);
  Tokens small_chunk = 256;
  std::string bd_seeds;
  breakdown->add_option("--small-chunk", small_chunk, "uniform chunk size of the baseline stage");
  breakdown->add_option("--seeds", bd_seeds, "comma-separated seeds (default: 3 from config seed)");

  auto* gen = app.add_subcommand("gen-trace", "write a synthetic length trace (JSONL)");
  std::string gen_out, gen_profile = "short_chat";
  std::size_t gen_n = 1000;
  std::uint64_t gen_seed = 0;
  bool gen_arrivals = false;
  double gen_qps = 1.0;
  gen->add_option("--out", gen_out, "output path")->required();
  gen->add_option("--profile", gen_profile, "short_chat | long_doc")
      ->check(CLI::IsMember({"short_chat", "long_doc"}));
  gen->add_option("--n", gen_n, "number of records");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_flag("--arrivals", gen_arrivals, "also draw Poisson arrival times");
  gen->add_option("--qps", gen_qps, "arrival rate when --arrivals is set");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(run_opts);
    if (sweep->parsed()) return cmd_sweep(sweep_opts, axis, values);
    if (goodput->parsed()) return cmd_goodput(goodput_opts, grid, gp_seeds);
    if (breakdown->parsed()) return cmd_breakdown(breakdown_opts, small_chunk, bd_seeds);
    if (gen->parsed()) return cmd_gen_trace(gen_out, gen_profile, gen_n, gen_seed, gen_arrivals,
                                            gen_qps);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const TraceParseError& e) {
    std::cerr << "trace error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
