// Copyright 2026 the pdsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pdsim {

using RequestId = std::int64_t;
using InstanceId = std::int32_t;
using Tokens = std::int64_t;

inline constexpr RequestId kNoRequest = -1;
inline constexpr InstanceId kNoInstance = -1;

enum class InstanceKind { PHeavy, DHeavy };

inline const char* to_string(InstanceKind kind) {
  return kind == InstanceKind::PHeavy ? "p_heavy" : "d_heavy";
}

/// One inference job as read from a trace: lengths only. output_len is known
/// to the simulation engine (it decides termination) but is never exposed to
/// any scheduling decision.
struct TraceRecord {
  Tokens prompt_len = 0;
  Tokens output_len = 0;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EngineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace pdsim
