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

// Offload facades over an Executor.
//
//   LkSession:       Init, (Copyin, Trigger, Wait, Copyout)*, Dispose
//   BaselineSession: Alloc, (Copyin, Launch, Wait, Copyout)*, Dispose
//
// A session is driven by one host thread. Triggers to disjoint masks may be
// outstanding at the same time; a session must not be shared between threads.

#include "persistkern/executor.hpp"

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace pk {

enum class Model : std::uint8_t { lk, baseline };

std::string_view to_string(Model model) noexcept; // "LK" / "BASE"

class LkSession {
public:
  explicit LkSession(Executor& exec);

  /// Boots the persistent workers and checks the block-to-SM pinning.
  PhaseTiming init();
  /// Publishes `work` to every masked SM. Returns once the write is visible
  /// on the device. Throws Error(busy) if a masked SM has outstanding work.
  PhaseTiming trigger(SmMask mask, const WorkDescriptor& work);
  /// Returns once every masked SM has published FINISHED, then acknowledges.
  PhaseTiming wait(SmMask mask);
  PhaseTiming copyin(std::uint64_t bytes);
  PhaseTiming copyout(std::uint64_t bytes);
  /// Sends EXIT to every worker. Throws Error(busy) while any SM is working.
  PhaseTiming dispose();

  bool initialized() const { return state_ == State::running; }
  bool busy(std::uint32_t sm) const { return triggered_.at(sm); }
  const std::vector<PhaseTiming>& timings() const { return timings_; }
  Executor& executor() { return exec_; }

private:
  enum class State : std::uint8_t { created, running, disposed };

  void require_running(const char* op) const;
  void check_mask(SmMask mask, const char* op) const;
  PhaseTiming record(Phase phase, Executor::Span span, SmMask mask);

  struct SlotUse {
    WorkDescriptor work;
    std::uint32_t users = 0;
  };

  Executor& exec_;
  State state_ = State::created;
  std::vector<bool> triggered_;
  std::vector<std::uint32_t> slot_of_;
  std::map<std::uint32_t, SlotUse> slots_;
  std::vector<PhaseTiming> timings_;
};

class BaselineSession {
public:
  explicit BaselineSession(Executor& exec);

  PhaseTiming alloc();
  /// Per-launch runtime setup plus the launch transfer; returns when the
  /// kernel starts on the device.
  PhaseTiming launch(SmMask mask, const WorkDescriptor& work);
  PhaseTiming wait();
  PhaseTiming copyin(std::uint64_t bytes);
  PhaseTiming copyout(std::uint64_t bytes);
  PhaseTiming dispose();

  const std::vector<PhaseTiming>& timings() const { return timings_; }

private:
  enum class State : std::uint8_t { created, allocated, launched, disposed };

  PhaseTiming record(Phase phase, Executor::Span span, SmMask mask);

  Executor& exec_;
  State state_ = State::created;
  SmMask last_mask_;
  std::vector<PhaseTiming> timings_;
};

struct PhaseRow {
  std::string run_id;
  Model model = Model::lk;
  PhaseTiming timing;
};

/// `run_id,model,phase,sm_mask,cycles`; native runs add a trailing
/// `backend` column.
std::string format_phase_csv(const std::vector<PhaseRow>& rows, TimeUnit unit);

} // namespace pk
