// Copyright 2026 the pdsim authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pdsim/cluster.hpp"
#include "pdsim/cost_model.hpp"
#include "pdsim/decode_flow.hpp"
#include "pdsim/proxy.hpp"
#include "pdsim/rng.hpp"
#include "pdsim/types.hpp"
#include "pdsim/workload.hpp"

namespace pdsim {

enum class MigrationReason { Init, Degrade, Backflow };

inline const char* to_string(MigrationReason r) {
  switch (r) {
    case MigrationReason::Init: return "init";
    case MigrationReason::Degrade: return "degrade";
    default: return "backflow";
  }
}

struct MigrationRecord {
  double time_ms = 0.0;
  InstanceId from = kNoInstance;
  InstanceId to = kNoInstance;
  MigrationReason reason = MigrationReason::Init;
};

/// Full per-request timeline. Scheduler-visible resettable counters live in
/// the engine's runtime state; everything here is true wall-clock history and
/// is never reset by migrations.
struct RequestLifecycle {
  RequestId id = kNoRequest;
  Tokens prompt_len = 0;
  Tokens output_len = 0;
  double arrival_ms = -1.0;
  double prefill_assign_ms = -1.0;
  double prefill_start_ms = -1.0;  // first prefill chunk enters a batch
  double prefill_end_ms = -1.0;    // last prefill chunk completes
  double first_token_ms = -1.0;    // user-visible: after transfer and decode-queue wait
  double completion_ms = -1.0;
  double transfer_ms = 0.0;        // decode-placement transfer duration
  double decode_queue_ms = 0.0;    // wait for KV slots before the first token
  std::vector<double> token_emit_times;
  std::vector<MigrationRecord> migrations;
  Tokens co_scheduled_prefill_tokens = 0;  // summed over its token-earning iterations
  std::vector<std::pair<double, Tokens>> co_scheduled_log;  // only when recording is on
  InstanceId prefill_instance = kNoInstance;
  InstanceId decode_instance = kNoInstance;  // host at completion
  int backflow_count = 0;
  bool rejected = false;
};

enum class PrefillRouting { LengthAware, RoundRobin };
enum class DecodePlacement { InPlace, FlowToDHeavy };

/// The scheduling mechanisms active in a run. Modes and ablation stages are
/// expressed as combinations of these switches.
struct PolicyStack {
  PrefillRouting routing = PrefillRouting::LengthAware;
  DecodePlacement placement = DecodePlacement::InPlace;
  bool flowing_enabled = false;  // watermark degrade + TPOT backflow
  bool early_reject = false;     // drop requests with no feasible instance
};

struct InstanceSpec {
  InstanceKind kind = InstanceKind::PHeavy;
  Tokens chunk_size = 0;
  Tokens kv_capacity = 0;
};

struct EngineInputs {
  std::vector<InstanceSpec> instances;
  PolicyStack stack;
  FlowPolicy flow;
  CalibrationProfile profile;
  double ttft_slo_ms = 0.0;
  double tpot_slo_ms = 0.0;
  std::vector<Arrival> arrivals;
  std::uint64_t fallback_seed = 0;
  bool record_iteration_log = false;
};

struct InstanceStats {
  InstanceId id = kNoInstance;
  InstanceKind kind = InstanceKind::PHeavy;
  long long iterations = 0;
  Tokens prefill_tokens_processed = 0;
  double busy_ms = 0.0;
  Tokens peak_kv_used = 0;
};

struct SimulationResult {
  std::vector<RequestLifecycle> lifecycles;
  std::vector<InstanceStats> instance_stats;
  long long fallback_assignments = 0;
  long long rejected = 0;
  long long migrations_init = 0;
  long long migrations_degrade = 0;
  long long migrations_backflow = 0;
  double sim_end_ms = 0.0;
};

/// Deterministic single-threaded event loop. Instances iterate asynchronously
/// (each schedules its own completion); simultaneous events are ordered
/// transfer < arrival < iteration-complete, then by push sequence, so a
/// migrated KV arrival is resident before a same-timestamp batch forms.
class Engine {
 public:
  explicit Engine(const EngineInputs& in)
      : in_(in), fallback_rng_(Rng::derive(in.fallback_seed, /*stream=*/3)) {
    in_.profile.validate();
    in_.flow.validate();
    if (in_.instances.empty()) throw ConfigError("engine: no instances");
    if (!(in_.ttft_slo_ms > 0.0) || !(in_.tpot_slo_ms > 0.0))
      throw ConfigError("engine: SLO bounds must be positive");
    bool any_prefill = false;
    for (std::size_t i = 0; i < in_.instances.size(); ++i) {
      const auto& spec = in_.instances[i];
      nodes_.push_back(Node{Instance(static_cast<InstanceId>(i), spec.kind, spec.chunk_size,
                                     spec.kv_capacity),
                            false, BatchPlan{}, 0.0, InstanceStats{}});
      nodes_.back().stats.id = static_cast<InstanceId>(i);
      nodes_.back().stats.kind = spec.kind;
      any_prefill = any_prefill || spec.chunk_size > 0;
    }
    peak_kv_.assign(nodes_.size(), 0);
    kick_queued_.assign(nodes_.size(), 0);
    if (!any_prefill) throw ConfigError("engine: no instance admits prefill");
  }

  SimulationResult run() {
    states_.resize(in_.arrivals.size());
    lifecycles_.resize(in_.arrivals.size());
    for (std::size_t i = 0; i < in_.arrivals.size(); ++i) {
      const Arrival& a = in_.arrivals[i];
      if (a.record.prompt_len < 1 || a.record.output_len < 1)
        throw ConfigError("engine: arrival with non-positive lengths");
      states_[i].rec = a.record;
      auto& lc = lifecycles_[i];
      lc.id = static_cast<RequestId>(i);
      lc.prompt_len = a.record.prompt_len;
      lc.output_len = a.record.output_len;
      push_event(a.time_ms, EventKind::Arrival, static_cast<RequestId>(i), kNoInstance);
    }
    while (!events_.empty()) {
      Event ev = events_.top();
      events_.pop();
      now_ = ev.time_ms;
      switch (ev.kind) {
        case EventKind::TransferComplete: handle_transfer_complete(ev.req); break;
        case EventKind::Arrival: handle_arrival(ev.req); break;
        case EventKind::IterationComplete: handle_iteration_complete(ev.inst); break;
      }
      // Batches form only once every same-timestamp event has settled, so a
      // KV arrival or enqueue at time t is always visible to the batch that
      // starts at t.
      if (events_.empty() || events_.top().time_ms > now_) drain_kicks();
    }
    check_all_settled();

    SimulationResult out;
    out.lifecycles = std::move(lifecycles_);
    for (auto& n : nodes_) {
      n.stats.peak_kv_used = peak_kv_[n.inst.id()];
      out.instance_stats.push_back(n.stats);
    }
    out.fallback_assignments = fallback_assignments_;
    out.rejected = rejected_;
    out.migrations_init = migrations_init_;
    out.migrations_degrade = migrations_degrade_;
    out.migrations_backflow = migrations_backflow_;
    out.sim_end_ms = now_;
    return out;
  }

 private:
  enum class EventKind : int { TransferComplete = 0, Arrival = 1, IterationComplete = 2 };
  enum class Phase { NotArrived, PrefillQueued, Transferring, DecodeQueued, DecodeRunning, Done,
                     Rejected };

  struct Event {
    double time_ms;
    EventKind kind;
    std::uint64_t seq;
    RequestId req;
    InstanceId inst;
  };
  struct EventAfter {
    bool operator()(const Event& a, const Event& b) const {
      if (a.time_ms != b.time_ms) return a.time_ms > b.time_ms;
      if (a.kind != b.kind) return static_cast<int>(a.kind) > static_cast<int>(b.kind);
      return a.seq > b.seq;
    }
  };

  struct RequestState {
    TraceRecord rec;
    Phase phase = Phase::NotArrived;
    InstanceId host = kNoInstance;
    Tokens generated = 0;       // true count; 1 once the prompt's last chunk is done
    Tokens kv_footprint = 0;
    Tokens sched_output_len = 0;      // scheduler-visible, reset on backflow
    double sched_anchor_ms = 0.0;     // scheduler-visible elapsed-clock origin
    bool degraded = false;            // resident on a P-heavy via degrade flowing
    InstanceId transfer_target = kNoInstance;
    MigrationReason pending_reason = MigrationReason::Init;
    double decode_ready_ms = 0.0;     // admissible since (prefill end or transfer end)
  };

  struct Node {
    Instance inst;
    bool busy;
    BatchPlan plan;
    double iter_start_ms;
    InstanceStats stats;
  };

  void push_event(double t, EventKind kind, RequestId req, InstanceId inst) {
    events_.push(Event{t, kind, seq_++, req, inst});
  }

  void request_kick(InstanceId id) {
    if (kick_queued_[id]) return;
    kick_queued_[id] = 1;
    kick_queue_.push_back(id);
  }

  void drain_kicks() {
    for (std::size_t i = 0; i < kick_queue_.size(); ++i) {
      InstanceId id = kick_queue_[i];
      kick_queued_[id] = 0;
      maybe_start_iteration(id);
    }
    kick_queue_.clear();
  }

  std::vector<InstanceSnapshot> snapshots() const {
    std::vector<InstanceSnapshot> snaps;
    snaps.reserve(nodes_.size());
    for (const auto& n : nodes_) {
      InstanceSnapshot s;
      s.id = n.inst.id();
      s.kind = n.inst.kind();
      s.chunk_size = n.inst.chunk_size();
      s.running_decode_count = static_cast<int>(n.inst.running_decode().size());
      for (const auto& e : n.inst.prefill_queue()) s.queued_prefill_remaining.push_back(e.remaining);
      snaps.push_back(std::move(s));
    }
    return snaps;
  }

  bool above_watermark(const Node& n) const {
    return static_cast<double>(n.inst.kv_used()) >
           in_.flow.watermark_m * static_cast<double>(n.inst.kv_capacity());
  }

  /// Least-loaded instance of a kind; ties by id. With require_fit the
  /// candidate must hold the footprint within capacity.
  std::optional<InstanceId> pick_min_kv(InstanceKind kind, Tokens footprint,
                                        bool require_fit) const {
    std::optional<InstanceId> best;
    Tokens best_used = 0;
    for (const auto& n : nodes_) {
      if (n.inst.kind() != kind) continue;
      if (require_fit && n.inst.kv_used() + footprint > n.inst.kv_capacity()) continue;
      if (!best || n.inst.kv_used() < best_used) {
        best = n.inst.id();
        best_used = n.inst.kv_used();
      }
    }
    return best;
  }

  void handle_arrival(RequestId rid) {
    RequestState& st = states_[rid];
    RequestLifecycle& lc = lifecycles_[rid];
    lc.arrival_ms = now_;
    InstanceId chosen = kNoInstance;
    if (in_.stack.routing == PrefillRouting::RoundRobin) {
      chosen = round_robin_.next(snapshots());
    } else {
      auto pick = schedule_prefill(st.rec.prompt_len, snapshots(), in_.profile, in_.ttft_slo_ms);
      if (pick) {
        chosen = *pick;
      } else if (in_.stack.early_reject) {
        st.phase = Phase::Rejected;
        lc.rejected = true;
        ++rejected_;
        return;
      } else {
        chosen = fallback_assign(snapshots(), fallback_rng_);
        ++fallback_assignments_;
      }
    }
    lc.prefill_assign_ms = now_;
    lc.prefill_instance = chosen;
    st.phase = Phase::PrefillQueued;
    st.host = chosen;
    nodes_[chosen].inst.enqueue_prefill(rid, st.rec.prompt_len);
    request_kick(chosen);
  }

  /// Scheduling phase + batch formation for an idle instance.
  void maybe_start_iteration(InstanceId id) {
    Node& node = nodes_[id];
    if (node.busy) return;
    if (in_.stack.flowing_enabled) run_flowing_phase(id);
    if (!node.inst.has_runnable_work()) return;
    BatchPlan plan = node.inst.form_batch();
    if (plan.empty()) return;
    double elapsed =
        iteration_time_ms(in_.profile, plan.prefill_tokens, static_cast<int>(plan.decode_reqs.size()));
    for (const auto& [rid, take] : plan.prefill_slices) {
      (void)take;
      if (lifecycles_[rid].prefill_start_ms < 0.0) lifecycles_[rid].prefill_start_ms = now_;
    }
    node.busy = true;
    node.plan = std::move(plan);
    node.iter_start_ms = now_;
    node.stats.iterations += 1;
    node.stats.busy_ms += elapsed;
    node.stats.prefill_tokens_processed += node.plan.prefill_tokens;
    push_event(now_ + elapsed, EventKind::IterationComplete, kNoRequest, id);
  }

  void run_flowing_phase(InstanceId id) {
    Node& node = nodes_[id];
    if (node.inst.kind() == InstanceKind::PHeavy) {
      std::vector<DecodeView> migrated;
      for (const auto& d : node.inst.running_decode()) {
        if (!states_[d.id].degraded) continue;
        migrated.push_back(make_view(d));
      }
      if (migrated.empty()) return;
      for (RequestId rid : select_backflow(migrated, in_.tpot_slo_ms, in_.flow)) {
        auto target = pick_min_kv(InstanceKind::DHeavy, states_[rid].kv_footprint,
                                  /*require_fit=*/true);
        if (!target) continue;  // no room anywhere; re-examined next iteration
        start_migration(rid, id, *target, MigrationReason::Backflow);
      }
    } else {
      degrade_pass(id);
    }
  }

  void degrade_pass(InstanceId id) {
    Node& node = nodes_[id];
    DHeavyDecodeState st;
    st.id = id;
    st.kv_used = node.inst.kv_used();
    st.kv_capacity = node.inst.kv_capacity();
    for (const auto& d : node.inst.running_decode()) st.running.push_back(make_view(d));
    for (RequestId rid : select_degrade(st, in_.flow)) {
      auto target = pick_min_kv(InstanceKind::PHeavy, states_[rid].kv_footprint,
                                /*require_fit=*/true);
      if (!target) break;  // cannot release more; residual waits for next iteration
      start_migration(rid, id, *target, MigrationReason::Degrade);
    }
  }

  DecodeView make_view(const Instance::DecodeEntry& d) const {
    const RequestState& st = states_[d.id];
    DecodeView v;
    v.request_id = d.id;
    v.current_output_len = st.sched_output_len;
    v.decode_elapsed_ms = now_ - st.sched_anchor_ms;
    v.current_tpot_ms = scheduler_tpot_ms(v.decode_elapsed_ms, v.current_output_len);
    v.kv_footprint = d.footprint;
    v.first_token_ms = lifecycles_[d.id].first_token_ms;
    return v;
  }

  /// Pulls a resident decode off its host and puts its KV on the wire. The
  /// request earns no tokens on either side until the transfer lands.
  void start_migration(RequestId rid, InstanceId from, InstanceId to, MigrationReason reason) {
    RequestState& st = states_[rid];
    Tokens fp = nodes_[from].inst.remove_decode(rid);
    st.kv_footprint = fp;
    st.phase = Phase::Transferring;
    st.host = kNoInstance;
    st.transfer_target = to;
    st.pending_reason = reason;
    lifecycles_[rid].migrations.push_back(MigrationRecord{now_, from, to, reason});
    if (reason == MigrationReason::Degrade) ++migrations_degrade_;
    if (reason == MigrationReason::Backflow) {
      ++migrations_backflow_;
      ++lifecycles_[rid].backflow_count;
    }
    double dur = transfer_time_ms(in_.profile, fp);
    st.decode_ready_ms = now_ + dur;
    push_event(now_ + dur, EventKind::TransferComplete, rid, kNoInstance);
    drain_pending(from);
  }

  void handle_transfer_complete(RequestId rid) {
    RequestState& st = states_[rid];
    InstanceId target = st.transfer_target;
    st.transfer_target = kNoInstance;
    on_decode_ready(rid, target, st.pending_reason);
  }

  void on_decode_ready(RequestId rid, InstanceId target, MigrationReason reason) {
    RequestState& st = states_[rid];
    st.phase = Phase::DecodeQueued;
    st.host = target;
    st.pending_reason = reason;
    if (nodes_[target].inst.admit_decode(rid, st.kv_footprint) == AdmitResult::Admitted)
      finish_admission(rid, target, reason);
    track_kv(target);
  }

  void finish_admission(RequestId rid, InstanceId target, MigrationReason reason) {
    RequestState& st = states_[rid];
    RequestLifecycle& lc = lifecycles_[rid];
    st.phase = Phase::DecodeRunning;
    st.host = target;
    lc.decode_instance = target;
    if (lc.first_token_ms < 0.0) {
      lc.first_token_ms = now_;
      lc.token_emit_times.push_back(now_);
      lc.decode_queue_ms = now_ - st.decode_ready_ms;
      st.sched_output_len = 1;
      st.sched_anchor_ms = now_;
    }
    if (reason == MigrationReason::Backflow) {
      // Treated as a new request from the scheduler's perspective.
      st.sched_output_len = 1;
      st.sched_anchor_ms = now_;
      st.degraded = false;
    } else if (reason == MigrationReason::Degrade) {
      st.degraded = true;
    }
    track_kv(target);
    if (reason == MigrationReason::Backflow && in_.stack.flowing_enabled &&
        above_watermark(nodes_[target]))
      degrade_pass(target);
    request_kick(target);
  }

  void drain_pending(InstanceId id) {
    Node& node = nodes_[id];
    while (node.inst.pending_head_fits()) {
      Instance::DecodeEntry e = node.inst.promote_pending_head();
      finish_admission(e.id, id, states_[e.id].pending_reason);
    }
  }

  void handle_iteration_complete(InstanceId id) {
    Node& node = nodes_[id];
    BatchPlan plan = std::move(node.plan);
    node.plan = BatchPlan{};
    node.busy = false;

    std::vector<RequestId> finished_prefills = node.inst.apply_prefill_progress(plan);

    for (RequestId rid : plan.decode_reqs) {
      if (!node.inst.is_running(rid)) continue;  // flowed away mid-iteration
      RequestState& st = states_[rid];
      RequestLifecycle& lc = lifecycles_[rid];
      node.inst.grow_decode(rid);
      st.kv_footprint += 1;
      st.generated += 1;
      st.sched_output_len += 1;
      lc.token_emit_times.push_back(now_);
      lc.co_scheduled_prefill_tokens += plan.prefill_tokens;
      if (in_.record_iteration_log) lc.co_scheduled_log.emplace_back(now_, plan.prefill_tokens);
      if (st.generated >= st.rec.output_len) {
        node.inst.remove_decode(rid);
        st.phase = Phase::Done;
        lc.completion_ms = now_;
        lc.decode_instance = id;
      }
    }

    for (RequestId rid : finished_prefills) handle_prefill_complete(rid, id);

    drain_pending(id);
    track_kv(id);
    request_kick(id);
  }

  void handle_prefill_complete(RequestId rid, InstanceId inst) {
    RequestState& st = states_[rid];
    RequestLifecycle& lc = lifecycles_[rid];
    lc.prefill_end_ms = now_;
    st.generated = 1;
    if (st.rec.output_len == 1) {
      // The prompt's last chunk already produced the only token.
      lc.first_token_ms = now_;
      lc.token_emit_times.push_back(now_);
      lc.completion_ms = now_;
      lc.decode_instance = inst;
      st.phase = Phase::Done;
      return;
    }
    st.kv_footprint = st.rec.prompt_len + 1;
    if (in_.stack.placement == DecodePlacement::FlowToDHeavy &&
        nodes_[inst].inst.kind() == InstanceKind::PHeavy) {
      auto target = pick_min_kv(InstanceKind::DHeavy, st.kv_footprint, /*require_fit=*/false);
      if (target) {
        lc.migrations.push_back(MigrationRecord{now_, inst, *target, MigrationReason::Init});
        ++migrations_init_;
        double dur = transfer_time_ms(in_.profile, st.rec.prompt_len);
        lc.transfer_ms = dur;
        st.phase = Phase::Transferring;
        st.host = kNoInstance;
        st.transfer_target = *target;
        st.pending_reason = MigrationReason::Init;
        st.decode_ready_ms = now_ + dur;
        push_event(now_ + dur, EventKind::TransferComplete, rid, kNoInstance);
        return;
      }
    }
    st.decode_ready_ms = now_;
    on_decode_ready(rid, inst, MigrationReason::Init);
  }

  void track_kv(InstanceId id) {
    Tokens used = nodes_[id].inst.kv_used();
    if (used > peak_kv_[id]) peak_kv_[id] = used;
  }

  void check_all_settled() const {
    std::vector<RequestId> stuck;
    for (std::size_t i = 0; i < states_.size(); ++i)
      if (states_[i].phase != Phase::Done && states_[i].phase != Phase::Rejected)
        stuck.push_back(static_cast<RequestId>(i));
    if (stuck.empty()) return;
    std::ostringstream msg;
    msg << "simulation stalled with " << stuck.size() << " unfinished request(s):";
    for (std::size_t i = 0; i < stuck.size() && i < 16; ++i) {
      const RequestState& st = states_[stuck[i]];
      msg << " #" << stuck[i] << "(phase=" << static_cast<int>(st.phase)
          << ", host=" << st.host << ")";
    }
    if (stuck.size() > 16) msg << " ...";
    throw EngineError(msg.str());
  }

  EngineInputs in_;
  std::vector<Node> nodes_;
  std::vector<RequestState> states_;
  std::vector<RequestLifecycle> lifecycles_;
  std::priority_queue<Event, std::vector<Event>, EventAfter> events_;
  std::uint64_t seq_ = 0;
  double now_ = 0.0;
  Rng fallback_rng_;
  RoundRobinRouter round_robin_;
  std::vector<Tokens> peak_kv_;
  std::vector<InstanceId> kick_queue_;
  std::vector<char> kick_queued_;
  long long fallback_assignments_ = 0;
  long long rejected_ = 0;
  long long migrations_init_ = 0;
  long long migrations_degrade_ = 0;
  long long migrations_backflow_ = 0;
};

inline SimulationResult run_simulation(const EngineInputs& inputs) {
  Engine engine(inputs);
  return engine.run();
}

}  // namespace pdsim
