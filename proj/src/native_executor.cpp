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

#include "persistkern/native_executor.hpp"

#include "persistkern/error.hpp"

#include <algorithm>
#include <cstring>
#include <iostream>

#if defined(__linux__)
#include <pthread.h>
#include <sched.h>
#endif

namespace pk {

using Clock = std::chrono::steady_clock;

std::string_view to_string(SpinStrategy s) noexcept {
  return s == SpinStrategy::pure_spin ? "pure_spin" : "spin_then_yield";
}

SpinStrategy parse_spin_strategy(std::string_view text) {
  if (text == "pure_spin") {
    return SpinStrategy::pure_spin;
  }
  if (text == "spin_then_yield") {
    return SpinStrategy::spin_then_yield;
  }
  throw Error(ErrorCode::config, "unknown spin strategy '" + std::string(text) + "'");
}

std::optional<std::string> NativeConfig::check() const {
  if (num_workers < 1 || num_workers > kMaxSms) {
    return "native.num_workers must be in [1, " + std::to_string(kMaxSms) + "]";
  }
  if (spin_strategy == SpinStrategy::spin_then_yield && yield_threshold == 0) {
    return "native.yield_threshold must be positive for spin_then_yield";
  }
  if (ns_per_iteration.den == 0) {
    return "native.ns_per_iteration has a zero denominator";
  }
  if (timeout_ms == 0) {
    return "native.timeout_ms must be positive";
  }
  return std::nullopt;
}

namespace {

// Spin-wait helper shared by the host and the workers.
class Backoff {
public:
  explicit Backoff(const NativeConfig& cfg) : cfg_(cfg) {}
  void pause() {
    if (cfg_.spin_strategy == SpinStrategy::spin_then_yield && ++spins_ > cfg_.yield_threshold) {
      std::this_thread::yield();
    }
  }
  void reset() { spins_ = 0; }

private:
  const NativeConfig& cfg_;
  std::uint64_t spins_ = 0;
};

bool pin_thread(std::thread& t, std::uint32_t core) {
#if defined(__linux__)
  const unsigned ncpu = std::max(1U, std::thread::hardware_concurrency());
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(core % ncpu, &set);
  return pthread_setaffinity_np(t.native_handle(), sizeof(set), &set) == 0;
#else
  (void)t;
  (void)core;
  return false;
#endif
}

} // namespace

NativeExecutor::NativeExecutor(NativeConfig cfg) : cfg_(cfg), epoch_(Clock::now()) {
  if (auto why = cfg_.check()) {
    throw Error(ErrorCode::config, *why);
  }
  for (std::uint32_t i = 0; i < cfg_.num_workers; ++i) {
    workers_.push_back(std::make_unique<Worker>());
  }
}

NativeExecutor::~NativeExecutor() {
  stop_.store(true, std::memory_order_release);
  join_all();
  for (auto& t : base_threads_) {
    if (t.joinable()) {
      t.join();
    }
  }
}

std::uint64_t NativeExecutor::now() const {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - epoch_).count());
}

void NativeExecutor::join_all() {
  for (auto& w : workers_) {
    if (w->thread.joinable()) {
      w->thread.join();
    }
  }
}

// The sequence number is taken before the store. Anyone who observes the
// store and writes in response draws a larger number, so the merged log
// respects every causal edge of the protocol.
void NativeExecutor::host_store(std::uint32_t sm, std::uint32_t word) {
  const std::uint64_t step = seq_.fetch_add(1);
  workers_[sm]->to_gpu.word.store(word, std::memory_order_release);
  std::lock_guard lock(host_log_.mu);
  host_log_.records.push_back({step, protocol::Side::host, sm, word});
}

void NativeExecutor::worker_store(std::uint32_t sm, std::uint32_t word) {
  Worker& w = *workers_[sm];
  const std::uint64_t step = seq_.fetch_add(1);
  w.from_gpu.word.store(word, std::memory_order_release);
  std::lock_guard lock(w.log.mu);
  w.log.records.push_back({step, protocol::Side::device, sm, word});
}

void NativeExecutor::run_busy_loop(const WorkDescriptor& work) const {
  if (work.kind != WorkKind::busy_loop) {
    throw Error(ErrorCode::unsupported_workload, "native backend runs busy_loop work only");
  }
  const auto ns = cfg_.ns_per_iteration.ceil_mul(work.iterations);
  if (ns == 0) {
    return;
  }
  const auto until = Clock::now() + std::chrono::nanoseconds(ns);
  while (Clock::now() < until) {
  }
}

void NativeExecutor::worker_loop(std::uint32_t sm) {
  Worker& w = *workers_[sm];
  protocol::WorkerState state = protocol::WorkerState::booting();
  std::optional<std::uint32_t> last;
  Backoff backoff(cfg_);
  try {
    while (!stop_.load(std::memory_order_acquire)) {
      const protocol::StatusWord observed{w.to_gpu.word.load(std::memory_order_acquire)};
      const protocol::WorkerState before = state;
      const auto r = protocol::worker_step(state, observed);
      state = r.next;
      bool changed = !(state == before);
      if (r.publish && last != r.publish->raw) {
        last = r.publish->raw;
        worker_store(sm, r.publish->raw);
        changed = true;
      }
      if (r.action.kind == protocol::WorkerAction::Kind::exit) {
        break;
      }
      if (r.action.kind == protocol::WorkerAction::Kind::begin_work) {
        if (r.action.slot >= kNativeSlots) {
          throw ProtocolViolation("slot " + std::to_string(r.action.slot) + " has no descriptor", observed.raw);
        }
        {
          std::lock_guard lock(w.log.mu);
          w.log.dispatches.push_back({sm, r.action.slot, now()});
        }
        run_busy_loop(slots_[r.action.slot]);
        const auto done = protocol::worker_complete(state);
        state = done.next;
        last = done.publish->raw;
        worker_store(sm, done.publish->raw);
        changed = true;
      }
      if (changed) {
        backoff.reset();
      } else {
        backoff.pause();
      }
    }
  } catch (const std::exception& e) {
    w.failure = "SM " + std::to_string(sm) + ": " + e.what();
    w.failed.store(true, std::memory_order_release);
  }
  w.exited.store(true, std::memory_order_release);
}

void NativeExecutor::check_failures() const {
  for (const auto& w : workers_) {
    if (w->failed.load(std::memory_order_acquire)) {
      throw Error(ErrorCode::protocol_violation, w->failure);
    }
  }
}

void NativeExecutor::host_wait_for(SmMask mask, std::uint32_t word, const char* what) {
  const auto deadline = Clock::now() + std::chrono::milliseconds(cfg_.timeout_ms);
  Backoff backoff(cfg_);
  for (;;) {
    bool all = true;
    std::uint32_t laggard = 0;
    mask.for_each([&](std::uint32_t sm) {
      if (all && workers_[sm]->from_gpu.word.load(std::memory_order_acquire) != word) {
        all = false;
        laggard = sm;
      }
    });
    if (all) {
      return;
    }
    check_failures();
    backoff.pause();
    if (Clock::now() > deadline) {
      broken_ = true;
      throw HangDetected(std::string("hang detected on SM ") + std::to_string(laggard) + ": " + what +
                             " (timeout " + std::to_string(cfg_.timeout_ms) + " ms)",
                         laggard);
    }
  }
}

Executor::Span NativeExecutor::lk_boot() {
  if (booted_ || broken_) {
    throw Error(ErrorCode::busy, "persistent workers already started");
  }
  const std::uint64_t t0 = now();
  for (std::uint32_t sm = 0; sm < cfg_.num_workers; ++sm) {
    host_store(sm, protocol::kThreadNop);
  }
  for (std::uint32_t sm = 0; sm < cfg_.num_workers; ++sm) {
    Worker& w = *workers_[sm];
    try {
      w.thread = std::thread([this, sm] { worker_loop(sm); });
    } catch (const std::system_error& e) {
      stop_.store(true, std::memory_order_release);
      join_all();
      broken_ = true;
      throw Error(ErrorCode::init_failure, std::string("cannot start worker thread: ") + e.what());
    }
    if (cfg_.pin_to_cores && !pin_thread(w.thread, sm) && !pin_warning_) {
      pin_warning_ = "thread pinning refused by the OS; workers run unpinned";
      std::cerr << "persistkern: warning: " << *pin_warning_ << '\n';
    }
  }
  booted_ = true;
  host_wait_for(SmMask::all(cfg_.num_workers), protocol::kThreadNop, "waiting for workers to boot");
  return {t0, now() - t0};
}

Executor::Span NativeExecutor::lk_post(SmMask mask, const WorkDescriptor& work) {
  if (!booted_ || broken_) {
    throw Error(ErrorCode::invalid_argument, "trigger without running workers");
  }
  if (work.slot >= kNativeSlots) {
    throw Error(ErrorCode::invalid_argument, "native descriptor slots are 0.." + std::to_string(kNativeSlots - 1));
  }
  if (work.kind != WorkKind::busy_loop) {
    throw Error(ErrorCode::unsupported_workload, "native backend runs busy_loop work only");
  }
  const std::uint32_t word = protocol::encode_to_gpu(protocol::HostCommand::work(work.slot)).raw;
  mask.for_each([&](std::uint32_t sm) {
    if (workers_[sm]->from_gpu.word.load(std::memory_order_acquire) != protocol::kThreadNop) {
      throw Error(ErrorCode::busy, "SM " + std::to_string(sm) + " is not idle");
    }
  });
  const std::uint64_t t0 = now();
  slots_[work.slot] = work; // published by the release stores below
  mask.for_each([&](std::uint32_t sm) { host_store(sm, word); });
  return {t0, now() - t0};
}

Executor::Span NativeExecutor::lk_await(SmMask mask) {
  const std::uint64_t t0 = now();
  host_wait_for(mask, protocol::kThreadFinished, "waiting for FINISHED");
  const Span span{t0, now() - t0};
  mask.for_each([&](std::uint32_t sm) { host_store(sm, protocol::kThreadNop); });
  host_wait_for(mask, protocol::kThreadNop, "waiting for acknowledgement");
  return span;
}

Executor::Span NativeExecutor::lk_shutdown() {
  if (!booted_) {
    throw Error(ErrorCode::invalid_argument, "dispose without running workers");
  }
  for (std::uint32_t sm = 0; sm < cfg_.num_workers; ++sm) {
    if (workers_[sm]->from_gpu.word.load(std::memory_order_acquire) == protocol::kThreadWorking) {
      throw Error(ErrorCode::busy, "dispose while SM " + std::to_string(sm) + " is working");
    }
  }
  const std::uint64_t t0 = now();
  for (std::uint32_t sm = 0; sm < cfg_.num_workers; ++sm) {
    host_store(sm, protocol::kThreadExit);
  }
  const auto deadline = Clock::now() + std::chrono::milliseconds(cfg_.timeout_ms);
  Backoff backoff(cfg_);
  while (exited_workers() < cfg_.num_workers) {
    backoff.pause();
    if (Clock::now() > deadline) {
      broken_ = true;
      throw HangDetected("workers did not exit within " + std::to_string(cfg_.timeout_ms) + " ms", 0);
    }
  }
  join_all();
  booted_ = false;
  check_failures();
  return {t0, now() - t0};
}

Executor::Span NativeExecutor::base_alloc() {
  if (base_allocated_) {
    throw Error(ErrorCode::busy, "baseline context already allocated");
  }
  const std::uint64_t t0 = now();
  base_threads_.reserve(cfg_.num_workers);
  base_allocated_ = true;
  return {t0, now() - t0};
}

Executor::Span NativeExecutor::base_launch(SmMask mask, const WorkDescriptor& work) {
  if (!base_allocated_) {
    throw Error(ErrorCode::invalid_argument, "launch before alloc");
  }
  if (!base_threads_.empty()) {
    throw Error(ErrorCode::busy, "previous launch has not been waited for");
  }
  if (work.kind != WorkKind::busy_loop) {
    throw Error(ErrorCode::unsupported_workload, "native backend runs busy_loop work only");
  }
  const std::uint64_t t0 = now();
  mask.for_each([&](std::uint32_t) { base_threads_.emplace_back([this, work] { run_busy_loop(work); }); });
  return {t0, now() - t0};
}

Executor::Span NativeExecutor::base_await() {
  if (base_threads_.empty()) {
    throw Error(ErrorCode::invalid_argument, "wait without a launched kernel");
  }
  const std::uint64_t t0 = now();
  for (auto& t : base_threads_) {
    t.join();
  }
  base_threads_.clear();
  return {t0, now() - t0};
}

Executor::Span NativeExecutor::base_release() {
  if (!base_allocated_) {
    throw Error(ErrorCode::invalid_argument, "dispose before alloc");
  }
  if (!base_threads_.empty()) {
    throw Error(ErrorCode::busy, "dispose while a kernel is running");
  }
  const std::uint64_t t0 = now();
  base_threads_.shrink_to_fit();
  base_allocated_ = false;
  return {t0, now() - t0};
}

Executor::Span NativeExecutor::copy(std::uint64_t bytes, Direction dir) {
  auto& src = dir == Direction::host_to_device ? copy_src_ : copy_dst_;
  auto& dst = dir == Direction::host_to_device ? copy_dst_ : copy_src_;
  src.resize(std::max<std::size_t>(src.size(), bytes));
  dst.resize(std::max<std::size_t>(dst.size(), bytes));
  const std::uint64_t t0 = now();
  if (bytes > 0) {
    std::memcpy(dst.data(), src.data(), bytes);
  }
  return {t0, now() - t0};
}

std::vector<protocol::TraceRecord> NativeExecutor::trace() const {
  std::vector<protocol::TraceRecord> out;
  {
    std::lock_guard lock(host_log_.mu);
    out = host_log_.records;
  }
  for (const auto& w : workers_) {
    std::lock_guard lock(w->log.mu);
    out.insert(out.end(), w->log.records.begin(), w->log.records.end());
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.step < b.step; });
  return out;
}

std::vector<Dispatch> NativeExecutor::dispatches() const {
  std::vector<Dispatch> out;
  for (const auto& w : workers_) {
    std::lock_guard lock(w->log.mu);
    out.insert(out.end(), w->log.dispatches.begin(), w->log.dispatches.end());
  }
  std::sort(out.begin(), out.end(), [](const Dispatch& a, const Dispatch& b) { return a.at < b.at; });
  return out;
}

std::vector<std::uint32_t> NativeExecutor::from_gpu_snapshot() const {
  std::vector<std::uint32_t> out;
  for (const auto& w : workers_) {
    out.push_back(w->from_gpu.word.load(std::memory_order_acquire));
  }
  return out;
}

std::uint32_t NativeExecutor::exited_workers() const {
  std::uint32_t n = 0;
  for (const auto& w : workers_) {
    n += w->exited.load(std::memory_order_acquire) ? 1 : 0;
  }
  return n;
}

} // namespace pk
