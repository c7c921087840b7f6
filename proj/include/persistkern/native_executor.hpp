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

// Persistent worker threads on the host CPU. Each emulated SM is a thread
// spinning on its own to_gpu cell; the host is the calling thread. Time is
// wall-clock nanoseconds from a steady clock.

#include "persistkern/executor.hpp"

#include <array>
#include <atomic>
#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace pk {

enum class SpinStrategy : std::uint8_t { pure_spin, spin_then_yield };

std::string_view to_string(SpinStrategy s) noexcept;
SpinStrategy parse_spin_strategy(std::string_view text); // throws Error(config)

struct NativeConfig {
  std::uint32_t num_workers = 4;
  bool pin_to_cores = false;
  SpinStrategy spin_strategy = SpinStrategy::spin_then_yield;
  std::uint64_t yield_threshold = 10'000; // spins before the first yield
  Ratio ns_per_iteration{1, 1};           // busy_loop calibration
  std::uint64_t timeout_ms = 10'000;      // hang detection

  std::optional<std::string> check() const;
};

/// Descriptor table size. Higher slots are legal on the wire but have no
/// backing storage here.
inline constexpr std::uint32_t kNativeSlots = 256;

class NativeExecutor final : public Executor {
public:
  explicit NativeExecutor(NativeConfig cfg);
  ~NativeExecutor() override;

  NativeExecutor(const NativeExecutor&) = delete;
  NativeExecutor& operator=(const NativeExecutor&) = delete;

  TimeUnit unit() const noexcept override { return TimeUnit::nanoseconds; }
  std::uint32_t num_sms() const noexcept override { return cfg_.num_workers; }
  std::uint64_t now() const override;

  Span lk_boot() override;
  Span lk_post(SmMask mask, const WorkDescriptor& work) override;
  Span lk_await(SmMask mask) override;
  Span lk_shutdown() override;

  Span base_alloc() override;
  Span base_launch(SmMask mask, const WorkDescriptor& work) override;
  Span base_await() override;
  Span base_release() override;

  Span copy(std::uint64_t bytes, Direction dir) override;

  std::vector<protocol::TraceRecord> trace() const override;
  std::vector<Dispatch> dispatches() const override;

  const NativeConfig& config() const { return cfg_; }
  /// Current from_gpu words, read with acquire ordering.
  std::vector<std::uint32_t> from_gpu_snapshot() const;
  /// Workers that have returned from their loop.
  std::uint32_t exited_workers() const;
  /// Set when pinning was requested but refused by the OS.
  const std::optional<std::string>& pin_warning() const { return pin_warning_; }

private:
  struct alignas(64) Cell {
    std::atomic<std::uint32_t> word{0};
  };

  // Records are appended by one thread each and merged by sequence number.
  struct Log {
    mutable std::mutex mu;
    std::vector<protocol::TraceRecord> records;
    std::vector<Dispatch> dispatches;
  };

  struct Worker {
    Cell to_gpu;
    Cell from_gpu;
    std::atomic<bool> exited{false};
    std::atomic<bool> failed{false};
    std::string failure; // written before `failed` is released
    Log log;
    std::thread thread;
  };

  void worker_loop(std::uint32_t sm);
  void run_busy_loop(const WorkDescriptor& work) const;
  void host_store(std::uint32_t sm, std::uint32_t word);
  void worker_store(std::uint32_t sm, std::uint32_t word);
  /// Spins (per strategy) until every masked from_gpu cell holds `word`.
  void host_wait_for(SmMask mask, std::uint32_t word, const char* what);
  void check_failures() const;
  void join_all();

  NativeConfig cfg_;
  std::chrono::steady_clock::time_point epoch_;
  std::vector<std::unique_ptr<Worker>> workers_;
  std::array<WorkDescriptor, kNativeSlots> slots_{};
  std::atomic<std::uint64_t> seq_{0};
  std::atomic<bool> stop_{false};
  Log host_log_;
  bool booted_ = false;
  bool broken_ = false;
  std::optional<std::string> pin_warning_;

  bool base_allocated_ = false;
  std::vector<std::thread> base_threads_;
  std::vector<std::uint8_t> copy_src_, copy_dst_;
};

} // namespace pk
