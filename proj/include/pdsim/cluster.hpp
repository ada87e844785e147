// Copyright 2026 the pdsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <deque>
#include <utility>
#include <vector>

#include "pdsim/types.hpp"

namespace pdsim {

struct ClusterConfig {
  int n_p_heavy = 1;
  int n_d_heavy = 0;
  Tokens s_p = 1024;              // prefill chunk size of P-heavy instances
  Tokens s_d = 1024;              // prefill chunk size of D-heavy instances; 0 = no prefill
  Tokens kv_capacity = 200'000;   // per-instance KV slots, in context tokens
  Tokens max_context_tokens = 16'384;

  void validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("cluster." + msg); };
    if (n_p_heavy < 0) fail("n_p_heavy: must be >= 0");
    if (n_d_heavy < 0) fail("n_d_heavy: must be >= 0");
    if (n_p_heavy + n_d_heavy < 1) fail("n_p_heavy + n_d_heavy: need at least one instance");
    if (s_p < 0) fail("s_p_tokens: must be >= 0");
    if (s_d < 0) fail("s_d_tokens: must be >= 0");
    if (kv_capacity < 1) fail("kv_capacity_tokens: must be >= 1");
    if (max_context_tokens < 1) fail("max_context_tokens: must be >= 1");
    if (s_p > max_context_tokens) fail("s_p_tokens: exceeds max_context_tokens");
    if (s_d > max_context_tokens) fail("s_d_tokens: exceeds max_context_tokens");
    if (n_p_heavy > 0 && s_p < 1) fail("s_p_tokens: P-heavy instances need a chunk size >= 1");
  }
};

/// One iteration's work: every resident decode advances one token, and up to
/// chunk_size prefill tokens are drawn FIFO off the queue (a chunk may span
/// the tail of one prompt and the head of the next).
struct BatchPlan {
  Tokens prefill_tokens = 0;
  std::vector<RequestId> decode_reqs;                     // snapshot of the running set
  std::vector<std::pair<RequestId, Tokens>> prefill_slices;  // tokens consumed per prompt
  bool empty() const { return prefill_tokens == 0 && decode_reqs.empty(); }
};

enum class AdmitResult { Admitted, Queued };

/// A single GPU server abstraction: a chunked-prefill queue, the set of
/// resident decodes with their KV footprints, and a FIFO of decodes waiting
/// for KV slots. Owned and driven by the event engine; not thread-safe.
class Instance {
 public:
  struct PrefillEntry {
    RequestId id;
    Tokens remaining;
  };
  struct DecodeEntry {
    RequestId id;
    Tokens footprint;  // prompt_len + tokens generated so far
  };

  Instance(InstanceId id, InstanceKind kind, Tokens chunk_size, Tokens kv_capacity)
      : id_(id), kind_(kind), chunk_size_(chunk_size), kv_capacity_(kv_capacity) {}

  InstanceId id() const { return id_; }
  InstanceKind kind() const { return kind_; }
  Tokens chunk_size() const { return chunk_size_; }
  Tokens kv_capacity() const { return kv_capacity_; }
  Tokens kv_used() const { return kv_used_; }
  bool can_prefill() const { return chunk_size_ > 0; }

  const std::deque<PrefillEntry>& prefill_queue() const { return prefill_queue_; }
  const std::vector<DecodeEntry>& running_decode() const { return running_; }
  const std::deque<DecodeEntry>& pending_decode() const { return pending_; }

  Tokens queued_prefill_tokens() const {
    Tokens total = 0;
    for (const auto& e : prefill_queue_) total += e.remaining;
    return total;
  }

  bool has_runnable_work() const {
    return !running_.empty() || (can_prefill() && !prefill_queue_.empty());
  }

  void enqueue_prefill(RequestId id, Tokens prompt_len) {
    prefill_queue_.push_back(PrefillEntry{id, prompt_len});
  }

  /// Plans the next iteration without mutating state; the engine applies the
  /// plan when the iteration completes.
  BatchPlan form_batch() const {
    BatchPlan plan;
    plan.decode_reqs.reserve(running_.size());
    for (const auto& d : running_) plan.decode_reqs.push_back(d.id);
    Tokens budget = chunk_size_;
    for (const auto& e : prefill_queue_) {
      if (budget <= 0) break;
      Tokens take = std::min(budget, e.remaining);
      plan.prefill_slices.emplace_back(e.id, take);
      plan.prefill_tokens += take;
      budget -= take;
    }
    return plan;
  }

  /// Advances the queue by the planned slices; returns, in FIFO order, the
  /// requests whose prompts finished their last chunk.
  std::vector<RequestId> apply_prefill_progress(const BatchPlan& plan) {
    std::vector<RequestId> completed;
    for (const auto& [id, take] : plan.prefill_slices) {
      if (prefill_queue_.empty() || prefill_queue_.front().id != id)
        throw EngineError("prefill queue diverged from batch plan");
      auto& head = prefill_queue_.front();
      head.remaining -= take;
      if (head.remaining < 0) throw EngineError("prefill slice exceeded remaining prompt");
      if (head.remaining == 0) {
        completed.push_back(id);
        prefill_queue_.pop_front();
      }
    }
    return completed;
  }

  /// Admission joins the running set only when the footprint fits and no
  /// earlier request is waiting; otherwise the request queues FIFO, and the
  /// time it spends there counts toward its TTFT.
  AdmitResult admit_decode(RequestId id, Tokens footprint) {
    if (pending_.empty() && kv_used_ + footprint <= kv_capacity_) {
      running_.push_back(DecodeEntry{id, footprint});
      kv_used_ += footprint;
      return AdmitResult::Admitted;
    }
    pending_.push_back(DecodeEntry{id, footprint});
    return AdmitResult::Queued;
  }

  bool pending_head_fits() const {
    return !pending_.empty() && kv_used_ + pending_.front().footprint <= kv_capacity_;
  }

  /// Pops the pending head into the running set; caller checks fit first.
  DecodeEntry promote_pending_head() {
    DecodeEntry e = pending_.front();
    pending_.pop_front();
    running_.push_back(e);
    kv_used_ += e.footprint;
    return e;
  }

  bool is_running(RequestId id) const {
    return std::any_of(running_.begin(), running_.end(),
                       [&](const DecodeEntry& d) { return d.id == id; });
  }

  /// One generated token = one more KV slot.
  void grow_decode(RequestId id) {
    for (auto& d : running_) {
      if (d.id == id) {
        d.footprint += 1;
        kv_used_ += 1;
        return;
      }
    }
    throw EngineError("grow_decode: request not resident");
  }

  /// Removes a resident decode (completion or migration) and frees its slots.
  Tokens remove_decode(RequestId id) {
    for (auto it = running_.begin(); it != running_.end(); ++it) {
      if (it->id == id) {
        Tokens fp = it->footprint;
        kv_used_ -= fp;
        running_.erase(it);
        return fp;
      }
    }
    throw EngineError("remove_decode: request not resident");
  }

 private:
  InstanceId id_;
  InstanceKind kind_;
  Tokens chunk_size_;
  Tokens kv_capacity_;
  Tokens kv_used_ = 0;
  std::deque<PrefillEntry> prefill_queue_;
  std::vector<DecodeEntry> running_;
  std::deque<DecodeEntry> pending_;
};

}  // namespace pdsim
