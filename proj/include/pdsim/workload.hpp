// Copyright 2026 the pdsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pdsim/rng.hpp"
#include "pdsim/types.hpp"

namespace pdsim {

struct WorkloadSpec {
  double qps = 1.0;            // mean arrival rate, requests/second
  std::uint64_t seed = 0;
  std::size_t n_requests = 1;
  Tokens max_prompt_len = 1'000'000;
  Tokens max_output_len = 1'000'000;
  bool replay_in_order = false;  // replay trace records in file order instead of sampling

  void validate() const {
    if (!(qps > 0.0)) throw ConfigError("workload.qps: must be > 0");
    if (n_requests < 1) throw ConfigError("workload.n_requests: must be >= 1");
    if (max_prompt_len < 1) throw ConfigError("workload.max_prompt_tokens: must be >= 1");
    if (max_output_len < 1) throw ConfigError("workload.max_output_tokens: must be >= 1");
  }
};

struct Arrival {
  double time_ms = 0.0;
  TraceRecord record;
};

struct TraceParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Reads a line-delimited trace: one JSON object per line with integer fields
/// prompt_len and output_len (extra fields are ignored). Blank lines are
/// skipped; anything else malformed is an error naming the line.
inline std::vector<TraceRecord> load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TraceParseError("cannot open trace file: " + path.string());
  std::vector<TraceRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    auto bad = [&](const std::string& why) {
      throw TraceParseError(path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    if (j.is_discarded()) bad("not valid JSON");
    if (!j.contains("prompt_len") || !j["prompt_len"].is_number_integer())
      bad("missing integer field prompt_len");
    if (!j.contains("output_len") || !j["output_len"].is_number_integer())
      bad("missing integer field output_len");
    TraceRecord rec{j["prompt_len"].get<Tokens>(), j["output_len"].get<Tokens>()};
    if (rec.prompt_len < 1) bad("prompt_len must be >= 1");
    if (rec.output_len < 1) bad("output_len must be >= 1");
    records.push_back(rec);
  }
  if (records.empty()) throw TraceParseError(path.string() + ": empty trace");
  return records;
}

inline void save_trace(const std::filesystem::path& path, std::span<const TraceRecord> records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file: " + path.string());
  for (const auto& r : records)
    out << "{\"prompt_len\": " << r.prompt_len << ", \"output_len\": " << r.output_len << "}\n";
}

inline void save_arrivals(const std::filesystem::path& path, std::span<const Arrival> arrivals) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write arrivals file: " + path.string());
  char buf[64];
  for (const auto& a : arrivals) {
    std::snprintf(buf, sizeof(buf), "%.6f", a.time_ms);
    out << "{\"arrival_time_ms\": " << buf << ", \"prompt_len\": " << a.record.prompt_len
        << ", \"output_len\": " << a.record.output_len << "}\n";
  }
}

inline std::vector<TraceRecord> filter_lengths(std::span<const TraceRecord> records,
                                               Tokens max_prompt, Tokens max_output) {
  std::vector<TraceRecord> kept;
  kept.reserve(records.size());
  for (const auto& r : records)
    if (r.prompt_len <= max_prompt && r.output_len <= max_output) kept.push_back(r);
  return kept;
}

/// Poisson arrival stream over the (filtered) trace: i.i.d. exponential gaps
/// with mean 1000/qps ms, records sampled with replacement (or replayed in
/// order), all driven by the seeded generator. Deterministic per seed.
inline std::vector<Arrival> generate_arrivals(const WorkloadSpec& spec,
                                              std::span<const TraceRecord> records) {
  spec.validate();
  if (records.empty()) throw std::invalid_argument("generate_arrivals: empty record set");
  Rng rng = Rng::derive(spec.seed, /*stream=*/1);
  const double mean_gap_ms = 1000.0 / spec.qps;
  std::vector<Arrival> arrivals;
  arrivals.reserve(spec.n_requests);
  double t = 0.0;
  for (std::size_t i = 0; i < spec.n_requests; ++i) {
    t += rng.exponential(mean_gap_ms);
    std::size_t idx = spec.replay_in_order ? i % records.size() : rng.uniform_index(records.size());
    arrivals.push_back(Arrival{t, records[idx]});
  }
  return arrivals;
}

/// Parameters of the bundled synthetic trace generator. Purely synthetic:
/// log-normal prompt/output lengths clamped to a range. Ships so tests and
/// experiments can run without external datasets.
struct SyntheticTraceParams {
  double prompt_log_mean = 6.2;   // exp(6.2) ~ 493 tokens
  double prompt_log_sigma = 0.9;
  double output_log_mean = 5.0;   // exp(5.0) ~ 148 tokens
  double output_log_sigma = 0.6;
  Tokens min_prompt = 16;
  Tokens max_prompt = 2048;
  Tokens min_output = 2;
  Tokens max_output = 1024;
};

/// Short prompts / moderate outputs, chat-style mix.
inline SyntheticTraceParams short_chat_params() { return SyntheticTraceParams{}; }

/// Long prompts / short-to-moderate outputs, document-processing mix.
inline SyntheticTraceParams long_doc_params() {
  SyntheticTraceParams p;
  p.prompt_log_mean = 8.3;   // exp(8.3) ~ 4024 tokens
  p.prompt_log_sigma = 0.6;
  p.output_log_mean = 5.0;
  p.output_log_sigma = 0.5;
  p.min_prompt = 256;
  p.max_prompt = 16'384;
  p.min_output = 16;
  p.max_output = 512;
  return p;
}

inline std::vector<TraceRecord> generate_synthetic_trace(std::size_t n,
                                                         const SyntheticTraceParams& params,
                                                         std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("generate_synthetic_trace: n must be >= 1");
  Rng rng = Rng::derive(seed, /*stream=*/2);
  std::vector<TraceRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto draw = [&](double mu, double sigma, Tokens lo, Tokens hi) {
      Tokens v = static_cast<Tokens>(rng.lognormal(mu, sigma));
      return std::clamp(v, lo, hi);
    };
    records.push_back(TraceRecord{
        draw(params.prompt_log_mean, params.prompt_log_sigma, params.min_prompt,
             params.max_prompt),
        draw(params.output_log_mean, params.output_log_sigma, params.min_output,
             params.max_output)});
  }
  return records;
}

}  // namespace pdsim
