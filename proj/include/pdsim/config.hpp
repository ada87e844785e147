// Copyright 2026 the pdsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "pdsim/cluster.hpp"
#include "pdsim/cost_model.hpp"
#include "pdsim/decode_flow.hpp"
#include "pdsim/engine.hpp"
#include "pdsim/metrics.hpp"
#include "pdsim/workload.hpp"

namespace pdsim {

enum class Mode { Aggregation, Disaggregation, Hybrid };

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::Aggregation: return "aggregation";
    case Mode::Disaggregation: return "disaggregation";
    default: return "hybrid";
  }
}

inline Mode mode_from_string(const std::string& s) {
  if (s == "aggregation") return Mode::Aggregation;
  if (s == "disaggregation") return Mode::Disaggregation;
  if (s == "hybrid") return Mode::Hybrid;
  throw ConfigError("mode: expected aggregation | disaggregation | hybrid, got \"" + s + "\"");
}

/// Workload block: lengths come from a trace file or the bundled synthetic
/// generator (exactly one of the two).
struct WorkloadConfig {
  std::optional<std::string> trace_path;
  std::optional<std::string> synthetic_profile;  // "short_chat" | "long_doc"
  std::optional<SyntheticTraceParams> synthetic_overrides;
  std::size_t synthetic_n = 2000;  // distinct records to draw arrivals from
  WorkloadSpec spec;

  void validate() const {
    spec.validate();
    if (trace_path.has_value() == synthetic_profile.has_value())
      throw ConfigError("workload: exactly one of trace_path / synthetic must be given");
    if (synthetic_profile && *synthetic_profile != "short_chat" &&
        *synthetic_profile != "long_doc")
      throw ConfigError("workload.synthetic.profile: expected short_chat | long_doc");
  }
};

struct OutputConfig {
  std::string dir = "out";
  bool events = false;  // write events.jsonl
};

struct ExperimentConfig {
  Mode mode = Mode::Hybrid;
  ClusterConfig cluster;
  CalibrationProfile profile;
  SloConfig slo;
  FlowPolicy policy;
  WorkloadConfig workload;
  OutputConfig output;
  bool early_reject = false;

  void validate() const {
    cluster.validate();
    profile.validate();
    slo.validate();
    policy.validate();
    workload.validate();
    switch (mode) {
      case Mode::Aggregation:
        if (cluster.n_d_heavy > 0 && cluster.s_d != cluster.s_p)
          throw ConfigError("mode=aggregation requires s_d_tokens == s_p_tokens");
        if (cluster.s_p < 1)
          throw ConfigError("mode=aggregation requires a chunk size >= 1");
        break;
      case Mode::Disaggregation:
        if (cluster.s_d != 0)
          throw ConfigError("mode=disaggregation requires s_d_tokens == 0");
        if (cluster.n_p_heavy < 1 || cluster.n_d_heavy < 1)
          throw ConfigError("mode=disaggregation requires at least one instance of each kind");
        break;
      case Mode::Hybrid:
        if ((cluster.n_p_heavy < 1 || cluster.s_p < 1) &&
            (cluster.n_d_heavy < 1 || cluster.s_d < 1))
          throw ConfigError("mode=hybrid: no instance can run prefill "
                            "(need P-heavy with s_p_tokens >= 1 or D-heavy with s_d_tokens >= 1)");
        break;
    }
  }
};

/// Instances laid out P-heavy first (ids 0..n_p-1), then D-heavy.
inline std::vector<InstanceSpec> make_instances(const ClusterConfig& c) {
  std::vector<InstanceSpec> specs;
  for (int i = 0; i < c.n_p_heavy; ++i)
    specs.push_back(InstanceSpec{InstanceKind::PHeavy, c.s_p, c.kv_capacity});
  for (int i = 0; i < c.n_d_heavy; ++i)
    specs.push_back(InstanceSpec{InstanceKind::DHeavy, c.s_d, c.kv_capacity});
  return specs;
}

inline PolicyStack make_stack(Mode mode, const FlowPolicy& policy, bool early_reject) {
  PolicyStack stack;
  stack.routing = PrefillRouting::LengthAware;
  stack.early_reject = early_reject;
  switch (mode) {
    case Mode::Aggregation:
      stack.placement = DecodePlacement::InPlace;
      stack.flowing_enabled = false;
      break;
    case Mode::Disaggregation:
      stack.placement = DecodePlacement::FlowToDHeavy;
      stack.flowing_enabled = false;
      break;
    case Mode::Hybrid:
      stack.placement = policy.migration_enabled ? DecodePlacement::FlowToDHeavy
                                                 : DecodePlacement::InPlace;
      stack.flowing_enabled = policy.migration_enabled;
      break;
  }
  return stack;
}

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const std::string& key,
                                     const std::string& scope) {
  if (!j.contains(key)) throw ConfigError(scope + key + ": missing");
  return j.at(key);
}

template <typename T>
T get_field(const nlohmann::json& j, const std::string& key, const std::string& scope) {
  try {
    return require(j, key, scope).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(scope + key + ": wrong type");
  }
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, const std::string& scope, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(scope + key + ": wrong type");
  }
}

}  // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["mode"] = to_string(cfg.mode);
  j["cluster"] = {{"n_p_heavy", cfg.cluster.n_p_heavy},
                  {"n_d_heavy", cfg.cluster.n_d_heavy},
                  {"s_p_tokens", cfg.cluster.s_p},
                  {"s_d_tokens", cfg.cluster.s_d},
                  {"kv_capacity_tokens", cfg.cluster.kv_capacity},
                  {"max_context_tokens", cfg.cluster.max_context_tokens}};
  j["profile"] = {{"base_iter_ms", cfg.profile.base_iter_ms},
                  {"per_prefill_token_ms", cfg.profile.per_prefill_token_ms},
                  {"per_decode_req_ms", cfg.profile.per_decode_req_ms},
                  {"ref_decode_batch", cfg.profile.ref_decode_batch},
                  {"kv_bytes_per_token", cfg.profile.kv_bytes_per_token},
                  {"link_bandwidth_bytes_per_ms", cfg.profile.link_bandwidth_bytes_per_ms}};
  j["slo"] = {{"ttft_ms", cfg.slo.ttft_ms},
              {"tpot_ms", cfg.slo.tpot_ms},
              {"attainment_target", cfg.slo.attainment_target}};
  j["policy"] = {{"watermark", cfg.policy.watermark_m},
                 {"approach_factor", cfg.policy.approach_factor_alpha},
                 {"migration_enabled", cfg.policy.migration_enabled}};
  nlohmann::json w;
  if (cfg.workload.trace_path) w["trace_path"] = *cfg.workload.trace_path;
  if (cfg.workload.synthetic_profile) {
    nlohmann::json syn;
    syn["profile"] = *cfg.workload.synthetic_profile;
    syn["n_records"] = cfg.workload.synthetic_n;
    if (cfg.workload.synthetic_overrides) {
      const auto& p = *cfg.workload.synthetic_overrides;
      syn["prompt_log_mean"] = p.prompt_log_mean;
      syn["prompt_log_sigma"] = p.prompt_log_sigma;
      syn["output_log_mean"] = p.output_log_mean;
      syn["output_log_sigma"] = p.output_log_sigma;
      syn["min_prompt_tokens"] = p.min_prompt;
      syn["max_prompt_tokens"] = p.max_prompt;
      syn["min_output_tokens"] = p.min_output;
      syn["max_output_tokens"] = p.max_output;
    }
    w["synthetic"] = syn;
  }
  w["qps"] = cfg.workload.spec.qps;
  w["seed"] = cfg.workload.spec.seed;
  w["n_requests"] = cfg.workload.spec.n_requests;
  w["max_prompt_tokens"] = cfg.workload.spec.max_prompt_len;
  w["max_output_tokens"] = cfg.workload.spec.max_output_len;
  w["replay_in_order"] = cfg.workload.spec.replay_in_order;
  j["workload"] = w;
  j["output"] = {{"dir", cfg.output.dir}, {"events", cfg.output.events}};
  j["early_reject"] = cfg.early_reject;
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using detail::get_field;
  using detail::get_or;
  using detail::require;
  ExperimentConfig cfg;
  cfg.mode = mode_from_string(get_field<std::string>(j, "mode", ""));

  const auto& jc = require(j, "cluster", "");
  cfg.cluster.n_p_heavy = get_field<int>(jc, "n_p_heavy", "cluster.");
  cfg.cluster.n_d_heavy = get_field<int>(jc, "n_d_heavy", "cluster.");
  cfg.cluster.s_p = get_field<Tokens>(jc, "s_p_tokens", "cluster.");
  cfg.cluster.s_d = get_field<Tokens>(jc, "s_d_tokens", "cluster.");
  cfg.cluster.kv_capacity = get_field<Tokens>(jc, "kv_capacity_tokens", "cluster.");
  cfg.cluster.max_context_tokens =
      get_or<Tokens>(jc, "max_context_tokens", "cluster.", cfg.cluster.max_context_tokens);

  if (j.contains("profile")) {
    const auto& jp = j.at("profile");
    cfg.profile.base_iter_ms = get_or(jp, "base_iter_ms", "profile.", cfg.profile.base_iter_ms);
    cfg.profile.per_prefill_token_ms =
        get_or(jp, "per_prefill_token_ms", "profile.", cfg.profile.per_prefill_token_ms);
    cfg.profile.per_decode_req_ms =
        get_or(jp, "per_decode_req_ms", "profile.", cfg.profile.per_decode_req_ms);
    cfg.profile.ref_decode_batch =
        get_or(jp, "ref_decode_batch", "profile.", cfg.profile.ref_decode_batch);
    cfg.profile.kv_bytes_per_token =
        get_or(jp, "kv_bytes_per_token", "profile.", cfg.profile.kv_bytes_per_token);
    cfg.profile.link_bandwidth_bytes_per_ms = get_or(
        jp, "link_bandwidth_bytes_per_ms", "profile.", cfg.profile.link_bandwidth_bytes_per_ms);
  }

  const auto& js = require(j, "slo", "");
  cfg.slo.ttft_ms = get_field<double>(js, "ttft_ms", "slo.");
  cfg.slo.tpot_ms = get_field<double>(js, "tpot_ms", "slo.");
  cfg.slo.attainment_target =
      get_or(js, "attainment_target", "slo.", cfg.slo.attainment_target);

  if (j.contains("policy")) {
    const auto& jf = j.at("policy");
    cfg.policy.watermark_m = get_or(jf, "watermark", "policy.", cfg.policy.watermark_m);
    cfg.policy.approach_factor_alpha =
        get_or(jf, "approach_factor", "policy.", cfg.policy.approach_factor_alpha);
    cfg.policy.migration_enabled =
        get_or(jf, "migration_enabled", "policy.", cfg.policy.migration_enabled);
  }

  const auto& jw = require(j, "workload", "");
  if (jw.contains("trace_path"))
    cfg.workload.trace_path = get_field<std::string>(jw, "trace_path", "workload.");
  if (jw.contains("synthetic")) {
    const auto& syn = jw.at("synthetic");
    cfg.workload.synthetic_profile =
        get_field<std::string>(syn, "profile", "workload.synthetic.");
    cfg.workload.synthetic_n =
        get_or<std::size_t>(syn, "n_records", "workload.synthetic.", cfg.workload.synthetic_n);
    SyntheticTraceParams base = *cfg.workload.synthetic_profile == "long_doc"
                                    ? long_doc_params()
                                    : short_chat_params();
    bool overridden = false;
    auto ov = [&](const char* key, auto& field) {
      if (syn.contains(key)) {
        field = syn.at(key).get<std::decay_t<decltype(field)>>();
        overridden = true;
      }
    };
    ov("prompt_log_mean", base.prompt_log_mean);
    ov("prompt_log_sigma", base.prompt_log_sigma);
    ov("output_log_mean", base.output_log_mean);
    ov("output_log_sigma", base.output_log_sigma);
    ov("min_prompt_tokens", base.min_prompt);
    ov("max_prompt_tokens", base.max_prompt);
    ov("min_output_tokens", base.min_output);
    ov("max_output_tokens", base.max_output);
    if (overridden) cfg.workload.synthetic_overrides = base;
  }
  cfg.workload.spec.qps = get_field<double>(jw, "qps", "workload.");
  cfg.workload.spec.seed = get_field<std::uint64_t>(jw, "seed", "workload.");
  cfg.workload.spec.n_requests = get_field<std::size_t>(jw, "n_requests", "workload.");
  cfg.workload.spec.max_prompt_len =
      get_or(jw, "max_prompt_tokens", "workload.", cfg.workload.spec.max_prompt_len);
  cfg.workload.spec.max_output_len =
      get_or(jw, "max_output_tokens", "workload.", cfg.workload.spec.max_output_len);
  cfg.workload.spec.replay_in_order =
      get_or(jw, "replay_in_order", "workload.", cfg.workload.spec.replay_in_order);

  if (j.contains("output")) {
    const auto& jo = j.at("output");
    cfg.output.dir = get_or<std::string>(jo, "dir", "output.", cfg.output.dir);
    cfg.output.events = get_or(jo, "events", "output.", cfg.output.events);
  }
  cfg.early_reject = get_or(j, "early_reject", "", cfg.early_reject);
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError(path.string() + ": not valid JSON");
  ExperimentConfig cfg = config_from_json(j);
  cfg.validate();
  return cfg;
}

inline void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config file: " + path.string());
  out << to_json(cfg).dump(2) << "\n";
}

}  // namespace pdsim
