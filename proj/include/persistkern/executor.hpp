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

#include "persistkern/device_model.hpp"
#include "persistkern/protocol.hpp"

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace pk {

enum class Phase : std::uint8_t { init, alloc, copyin, trigger, launch, wait, copyout, dispose };

std::string_view to_string(Phase phase) noexcept;

/// Simulated executors count host clock cycles, native ones nanoseconds.
enum class TimeUnit : std::uint8_t { cycles, nanoseconds };

std::string_view to_string(TimeUnit unit) noexcept;

struct PhaseTiming {
  Phase phase = Phase::init;
  std::uint64_t start = 0; // executor clock at phase entry
  std::uint64_t ticks = 0;
  SmMask mask;

  std::uint64_t end() const { return start + ticks; }
};

enum class Direction : std::uint8_t { host_to_device, device_to_host };

/// One begin_work action taken by a worker.
struct Dispatch {
  std::uint32_t sm = 0;
  std::uint32_t slot = 0;
  std::uint64_t at = 0;
};

/// What an offload session needs from a concrete machine. Each call blocks
/// the host until the phase is over and returns its elapsed time together
/// with the clock value at entry.
///
/// Implementations check their own invariants (protocol, hangs) and throw
/// pk::Error subclasses; host-side bookkeeping lives in the sessions.
class Executor {
public:
  struct Span {
    std::uint64_t start = 0;
    std::uint64_t ticks = 0;
  };

  virtual ~Executor() = default;

  virtual TimeUnit unit() const noexcept = 0;
  virtual std::uint32_t num_sms() const noexcept = 0;
  virtual std::uint64_t now() const = 0;

  // Persistent kernel.
  virtual Span lk_boot() = 0;
  virtual Span lk_post(SmMask mask, const WorkDescriptor& work) = 0;
  /// Returns once every masked worker has published FINISHED; acknowledges
  /// them afterwards, outside the timed span.
  virtual Span lk_await(SmMask mask) = 0;
  virtual Span lk_shutdown() = 0;

  // Spawn-per-kernel baseline.
  virtual Span base_alloc() = 0;
  virtual Span base_launch(SmMask mask, const WorkDescriptor& work) = 0;
  virtual Span base_await() = 0;
  virtual Span base_release() = 0;

  virtual Span copy(std::uint64_t bytes, Direction dir) = 0;

  /// Mailbox writes recorded so far, in global order.
  virtual std::vector<protocol::TraceRecord> trace() const = 0;
  virtual std::vector<Dispatch> dispatches() const = 0;
};

} // namespace pk
