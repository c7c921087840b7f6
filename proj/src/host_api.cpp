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

#include "persistkern/host_api.hpp"

#include "persistkern/error.hpp"

namespace pk {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
  case ErrorCode::invalid_argument:
    return "invalid-argument";
  case ErrorCode::config:
    return "config";
  case ErrorCode::encoding:
    return "encoding";
  case ErrorCode::protocol_violation:
    return "protocol-violation";
  case ErrorCode::hang:
    return "hang-detected";
  case ErrorCode::busy:
    return "busy";
  case ErrorCode::init_failure:
    return "init-failure";
  case ErrorCode::unsupported_workload:
    return "unsupported-workload";
  case ErrorCode::unknown_scenario:
    return "unknown-scenario";
  case ErrorCode::parse:
    return "parse";
  case ErrorCode::io:
    return "io";
  case ErrorCode::comparison:
    return "comparison";
  case ErrorCode::internal:
    return "internal";
  }
  return "?";
}

std::string_view to_string(Phase phase) noexcept {
  switch (phase) {
  case Phase::init:
    return "Init";
  case Phase::alloc:
    return "Alloc";
  case Phase::copyin:
    return "Copyin";
  case Phase::trigger:
    return "Trigger";
  case Phase::launch:
    return "Launch";
  case Phase::wait:
    return "Wait";
  case Phase::copyout:
    return "Copyout";
  case Phase::dispose:
    return "Dispose";
  }
  return "?";
}

std::string_view to_string(TimeUnit unit) noexcept {
  return unit == TimeUnit::cycles ? "cycles" : "ns";
}

std::string_view to_string(Model model) noexcept { return model == Model::lk ? "LK" : "BASE"; }

// ---------------------------------------------------------------------------

LkSession::LkSession(Executor& exec)
    : exec_(exec), triggered_(exec.num_sms(), false), slot_of_(exec.num_sms(), 0) {}

PhaseTiming LkSession::record(Phase phase, Executor::Span span, SmMask mask) {
  timings_.push_back({phase, span.start, span.ticks, mask});
  return timings_.back();
}

void LkSession::require_running(const char* op) const {
  if (state_ != State::running) {
    throw Error(ErrorCode::invalid_argument, std::string(op) + " needs an initialized session");
  }
}

void LkSession::check_mask(SmMask mask, const char* op) const {
  if (mask.empty()) {
    throw Error(ErrorCode::invalid_argument, std::string(op) + " needs at least one SM");
  }
  if (!mask.fits(exec_.num_sms())) {
    throw Error(ErrorCode::invalid_argument, std::string(op) + ": mask " + mask.to_hex() + " selects SMs beyond " +
                                                 std::to_string(exec_.num_sms()));
  }
}

PhaseTiming LkSession::init() {
  if (state_ != State::created) {
    throw Error(ErrorCode::invalid_argument, "session already initialized");
  }
  const auto span = exec_.lk_boot();
  state_ = State::running;
  return record(Phase::init, span, SmMask::all(exec_.num_sms()));
}

PhaseTiming LkSession::trigger(SmMask mask, const WorkDescriptor& work) {
  require_running("trigger");
  check_mask(mask, "trigger");
  protocol::encode_to_gpu(protocol::HostCommand::work(work.slot)); // slot range
  mask.for_each([&](std::uint32_t sm) {
    if (triggered_[sm]) {
      throw Error(ErrorCode::busy, "trigger of busy SM " + std::to_string(sm));
    }
  });
  if (auto it = slots_.find(work.slot); it != slots_.end() && it->second.users > 0) {
    const WorkDescriptor& held = it->second.work;
    if (held.kind != work.kind || held.iterations != work.iterations || held.data_in != work.data_in ||
        held.data_out != work.data_out) {
      throw Error(ErrorCode::busy, "descriptor slot " + std::to_string(work.slot) + " is held by running work");
    }
  }
  const auto span = exec_.lk_post(mask, work);
  SlotUse& use = slots_[work.slot];
  use.work = work;
  mask.for_each([&](std::uint32_t sm) {
    triggered_[sm] = true;
    slot_of_[sm] = work.slot;
    ++use.users;
  });
  return record(Phase::trigger, span, mask);
}

PhaseTiming LkSession::wait(SmMask mask) {
  require_running("wait");
  check_mask(mask, "wait");
  mask.for_each([&](std::uint32_t sm) {
    if (!triggered_[sm]) {
      throw Error(ErrorCode::invalid_argument, "wait on SM " + std::to_string(sm) + " that was not triggered");
    }
  });
  const auto span = exec_.lk_await(mask);
  mask.for_each([&](std::uint32_t sm) {
    triggered_[sm] = false;
    auto it = slots_.find(slot_of_[sm]);
    if (it != slots_.end() && --it->second.users == 0) {
      slots_.erase(it);
    }
  });
  return record(Phase::wait, span, mask);
}

PhaseTiming LkSession::copyin(std::uint64_t bytes) {
  require_running("copyin");
  return record(Phase::copyin, exec_.copy(bytes, Direction::host_to_device), SmMask{});
}

PhaseTiming LkSession::copyout(std::uint64_t bytes) {
  require_running("copyout");
  return record(Phase::copyout, exec_.copy(bytes, Direction::device_to_host), SmMask{});
}

PhaseTiming LkSession::dispose() {
  require_running("dispose");
  for (std::uint32_t sm = 0; sm < triggered_.size(); ++sm) {
    if (triggered_[sm]) {
      throw Error(ErrorCode::busy, "dispose while SM " + std::to_string(sm) + " is working");
    }
  }
  const auto span = exec_.lk_shutdown();
  state_ = State::disposed;
  return record(Phase::dispose, span, SmMask::all(exec_.num_sms()));
}

// ---------------------------------------------------------------------------

BaselineSession::BaselineSession(Executor& exec) : exec_(exec) {}

PhaseTiming BaselineSession::record(Phase phase, Executor::Span span, SmMask mask) {
  timings_.push_back({phase, span.start, span.ticks, mask});
  return timings_.back();
}

PhaseTiming BaselineSession::alloc() {
  if (state_ != State::created) {
    throw Error(ErrorCode::invalid_argument, "baseline already allocated");
  }
  const auto span = exec_.base_alloc();
  state_ = State::allocated;
  return record(Phase::alloc, span, SmMask::all(exec_.num_sms()));
}

PhaseTiming BaselineSession::launch(SmMask mask, const WorkDescriptor& work) {
  if (state_ == State::launched) {
    throw Error(ErrorCode::busy, "launch while the previous kernel is outstanding");
  }
  if (state_ != State::allocated) {
    throw Error(ErrorCode::invalid_argument, "launch needs an allocated context");
  }
  if (mask.empty() || !mask.fits(exec_.num_sms())) {
    throw Error(ErrorCode::invalid_argument, "launch mask " + mask.to_hex() + " is empty or out of range");
  }
  const auto span = exec_.base_launch(mask, work);
  state_ = State::launched;
  last_mask_ = mask;
  return record(Phase::launch, span, mask);
}

PhaseTiming BaselineSession::wait() {
  if (state_ != State::launched) {
    throw Error(ErrorCode::invalid_argument, "wait without a launched kernel");
  }
  const auto span = exec_.base_await();
  state_ = State::allocated;
  return record(Phase::wait, span, last_mask_);
}

PhaseTiming BaselineSession::copyin(std::uint64_t bytes) {
  if (state_ != State::allocated) {
    throw Error(ErrorCode::invalid_argument, "copyin needs an allocated, idle context");
  }
  return record(Phase::copyin, exec_.copy(bytes, Direction::host_to_device), SmMask{});
}

PhaseTiming BaselineSession::copyout(std::uint64_t bytes) {
  if (state_ != State::allocated) {
    throw Error(ErrorCode::invalid_argument, "copyout needs an allocated, idle context");
  }
  return record(Phase::copyout, exec_.copy(bytes, Direction::device_to_host), SmMask{});
}

PhaseTiming BaselineSession::dispose() {
  if (state_ == State::launched) {
    throw Error(ErrorCode::busy, "dispose while a kernel is outstanding");
  }
  if (state_ != State::allocated) {
    throw Error(ErrorCode::invalid_argument, "dispose needs an allocated context");
  }
  const auto span = exec_.base_release();
  state_ = State::disposed;
  return record(Phase::dispose, span, SmMask::all(exec_.num_sms()));
}

// ---------------------------------------------------------------------------

std::string format_phase_csv(const std::vector<PhaseRow>& rows, TimeUnit unit) {
  const bool native = unit == TimeUnit::nanoseconds;
  std::string out = native ? "run_id,model,phase,sm_mask,cycles,backend\n" : "run_id,model,phase,sm_mask,cycles\n";
  for (const auto& row : rows) {
    out += row.run_id;
    out += ',';
    out += to_string(row.model);
    out += ',';
    out += to_string(row.timing.phase);
    out += ',';
    out += row.timing.mask.to_hex();
    out += ',';
    out += std::to_string(row.timing.ticks);
    if (native) {
      out += ",native";
    }
    out += '\n';
  }
  return out;
}

} // namespace pk
