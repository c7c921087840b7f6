/*
 * Copyright 2026 The persistkern Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Deterministic discrete-event realization of the offload model.
//
// One virtual cycle clock is shared by the host, the link and every SM.
// Events run in (due cycle, target rank, insertion order) order with target
// ranks link < sm 0 < sm 1 < ... < host, so a simulation is a pure function of
// its parameters and seed.
//
// A spinning worker whose to_gpu cell has not changed cannot change state, so
// it is parked instead of re-polled; a delivery to its cell wakes it one poll
// period later. This is exactly what stepping it every poll period would do,
// minus the no-op steps.

#include "persistkern/executor.hpp"
#include "persistkern/link_model.hpp"

#include <cstdint>
#include <deque>
#include <map>
#include <queue>
#include <random>
#include <string>
#include <vector>

namespace pk {

/// Bounded synthetic noise: uniform in [0, uniform_max] plus, with
/// probability spike_per_mille / 1000, a spike uniform in
/// [spike_min, spike_max]. Never exceeds bound().
struct JitterProfile {
  Cycles uniform_max = 0;
  std::uint32_t spike_per_mille = 0;
  Cycles spike_min = 0;
  Cycles spike_max = 0;

  bool enabled() const { return uniform_max > 0 || (spike_per_mille > 0 && spike_max > 0); }
  Cycles bound() const { return uniform_max + (spike_per_mille > 0 ? spike_max : 0); }
  std::optional<std::string> check(const char* prefix) const;
};

struct JitterConfig {
  JitterProfile link;    // every host<->device transfer
  JitterProfile runtime; // per-launch runtime setup of the baseline
};

enum class JitterSource : std::uint8_t { link, runtime };

class JitterModel {
public:
  JitterModel() : JitterModel(0, {}) {}
  JitterModel(std::uint64_t seed, JitterConfig cfg) : cfg_(cfg), rng_(seed) {}

  Cycles sample(JitterSource source);
  const JitterConfig& config() const { return cfg_; }

private:
  std::uint64_t below(std::uint64_t bound_inclusive);

  JitterConfig cfg_;
  std::mt19937_64 rng_; // raw output only: the engine sequence is fixed by the standard
};

/// Host-runtime costs that are not link transfers.
struct SimCalibration {
  // Persistent kernel.
  Cycles lk_init_boot_cycles = 508'830'000;
  Cycles lk_host_write_cycles = 1;
  Cycles lk_poll_interval_cycles = 8;
  Cycles lk_dispose_teardown_cycles = 29'840'000;
  bool workaround_full_board = true;
  // Baseline.
  Cycles base_alloc_cycles = 496'000'000;
  Cycles base_launch_setup_cycles = 3'200;
  std::uint64_t base_launch_payload_bytes = 256;
  Cycles base_dispose_cycles = 274'000;

  std::optional<std::string> check() const;
};

struct SimParams {
  DeviceConfig device;
  LinkModel link;
  SimCalibration calibration;
  JitterConfig jitter; // all zero: off
  std::uint64_t seed = 0;
  Cycles hang_budget_cycles = 10'000'000;
};

class SimExecutor final : public Executor {
public:
  explicit SimExecutor(SimParams params);

  TimeUnit unit() const noexcept override { return TimeUnit::cycles; }
  std::uint32_t num_sms() const noexcept override { return device_.config.num_sms; }
  std::uint64_t now() const override { return now_; }

  Span lk_boot() override;
  Span lk_post(SmMask mask, const WorkDescriptor& work) override;
  Span lk_await(SmMask mask) override;
  Span lk_shutdown() override;

  Span base_alloc() override;
  Span base_launch(SmMask mask, const WorkDescriptor& work) override;
  Span base_await() override;
  Span base_release() override;

  Span copy(std::uint64_t bytes, Direction dir) override;

  std::vector<protocol::TraceRecord> trace() const override { return trace_; }
  std::vector<Dispatch> dispatches() const override { return dispatches_; }

  const Device& device() const { return device_; }
  Device& device_for_test() { return device_; }
  const SimParams& params() const { return params_; }
  const Mailboard& host_view() const { return host_view_; }

  /// Host writes a raw word to one to_gpu cell and syncs it, bypassing the
  /// encoder. Fault-injection hook.
  void inject_to_gpu(std::uint32_t sm, std::uint32_t raw_word);

  /// Runs pending events until none are left. Parked workers do not count.
  void drain();
  bool quiescent() const { return queue_.empty(); }

private:
  enum class EventKind : std::uint8_t { deliver, poll, complete, visible, kernel_done };

  struct Event {
    Cycles due = 0;
    std::uint32_t rank = 0;
    std::uint64_t seq = 0;
    EventKind kind = EventKind::poll;
    std::uint32_t sm = 0;
    std::uint32_t word = 0;
    std::uint64_t token = 0;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      if (a.due != b.due) return a.due > b.due;
      if (a.rank != b.rank) return a.rank > b.rank;
      return a.seq > b.seq;
    }
  };

  std::uint32_t link_rank() const { return 0; }
  std::uint32_t sm_rank(std::uint32_t sm) const { return 1 + sm; }

  void schedule(Cycles due, std::uint32_t rank, EventKind kind, std::uint32_t sm = 0, std::uint32_t word = 0,
                std::uint64_t token = 0);
  void process(const Event& ev);
  void pop_and_process();
  void on_poll(std::uint32_t sm);
  void on_complete(std::uint32_t sm);
  void wake(std::uint32_t sm, Cycles at);
  void publish(std::uint32_t sm, protocol::StatusWord word);

  void host_write(std::uint32_t sm, protocol::StatusWord word);
  /// Ships to_gpu words of `mask` to the device, blocks until delivered.
  void host_sync(SmMask mask, std::uint64_t bytes);
  /// Blocks on readbacks until every masked host-side from_gpu cell holds
  /// `word`; returns the cycle at which the host saw it.
  Cycles host_poll_until(SmMask mask, std::uint32_t word);

  template <typename Pred>
  void run_until(Pred&& done, const std::string& stuck_on, std::uint32_t sm);
  void advance_to(Cycles t);
  [[noreturn]] void stall(const std::string& what, std::uint32_t sm);
  Cycles transfer_or_stall(std::uint64_t bytes, const std::string& what, std::uint32_t sm);
  void ensure_alive() const;

  SimParams params_;
  Device device_;
  Mailboard host_view_;
  JitterModel jitter_;
  Cycles now_ = 0;
  std::uint64_t next_seq_ = 0;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;

  std::vector<std::uint64_t> poll_token_;      // latest poll event per SM, older ones are stale
  std::vector<std::optional<Cycles>> poll_at_; // pending poll per SM
  std::vector<std::optional<std::uint32_t>> last_published_;
  std::vector<Cycles> boot_at_;
  std::vector<Cycles> exited_at_;
  std::map<std::uint32_t, WorkDescriptor> slots_;
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> deliveries_;

  bool lk_resident_ = false;
  bool base_allocated_ = false;
  bool kernel_in_flight_ = false;
  std::optional<Cycles> kernel_done_at_;
  bool failed_ = false;

  std::uint64_t next_step_ = 0;
  std::vector<protocol::TraceRecord> trace_;
  std::vector<Dispatch> dispatches_;
};

// ---------------------------------------------------------------------------
// Scripted runs

struct HostOp {
  enum class Kind : std::uint8_t {
    lk_init,
    lk_trigger,
    lk_wait,
    lk_copyin,
    lk_copyout,
    lk_dispose,
    base_alloc,
    base_launch,
    base_wait,
    base_copyin,
    base_copyout,
    base_dispose,
  };

  Kind kind = Kind::lk_init;
  SmMask mask;
  WorkDescriptor work;
  std::uint64_t bytes = 0;
};

struct SimTrace {
  std::vector<protocol::TraceRecord> protocol;
  std::vector<PhaseTiming> timings; // LK and baseline phases, in call order
  std::vector<bool> timing_is_baseline;
  std::vector<Dispatch> dispatches;
  std::vector<protocol::WorkerState> final_states;
  Cycles final_cycle = 0;
};

/// Executes `program` against a fresh simulated device, then drains the
/// event queue. Throws HangDetected or ProtocolViolation.
SimTrace run_until_quiescent(const SimParams& params, const std::vector<HostOp>& program);

/// `phase,sm_mask,start_cycle,end_cycle` rows with a header line.
std::string format_timings_csv(const std::vector<PhaseTiming>& timings);

} // namespace pk
