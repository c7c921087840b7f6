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

#include "persistkern/protocol.hpp"

#include "persistkern/error.hpp"

#include <charconv>
#include <map>

namespace pk::protocol {

bool is_legal_from_gpu(StatusWord w) noexcept {
  switch (w.raw) {
  case kThreadInit:
  case kThreadFinished:
  case kThreadWorking:
  case kThreadNop:
    return true;
  default:
    return false;
  }
}

bool is_legal_to_gpu(StatusWord w) noexcept {
  return w.raw == kThreadNop || w.raw == kThreadExit || w.raw >= kThreadWorkBase;
}

std::string to_string(HostCommand cmd) {
  switch (cmd.kind) {
  case HostCommand::Kind::nop:
    return "Nop";
  case HostCommand::Kind::exit:
    return "Exit";
  case HostCommand::Kind::work:
    return "Work(" + std::to_string(cmd.slot) + ")";
  }
  return "?";
}

std::optional<StatusWord> try_encode_to_gpu(HostCommand cmd) noexcept {
  switch (cmd.kind) {
  case HostCommand::Kind::nop:
    return StatusWord{kThreadNop};
  case HostCommand::Kind::exit:
    return StatusWord{kThreadExit};
  case HostCommand::Kind::work:
    if (cmd.slot > kMaxSlot) {
      return std::nullopt;
    }
    return StatusWord{kThreadWorkBase + cmd.slot};
  }
  return std::nullopt;
}

StatusWord encode_to_gpu(HostCommand cmd) {
  if (auto w = try_encode_to_gpu(cmd)) {
    return *w;
  }
  throw Error(ErrorCode::encoding,
              "work slot " + std::to_string(cmd.slot) + " does not fit in a mailbox word");
}

HostCommand decode_to_gpu(StatusWord w) {
  if (w.raw == kThreadNop) {
    return HostCommand::nop();
  }
  if (w.raw == kThreadExit) {
    return HostCommand::exit();
  }
  if (w.raw >= kThreadWorkBase) {
    return HostCommand::work(w.raw - kThreadWorkBase);
  }
  throw ProtocolViolation("illegal to_GPU word " + std::to_string(w.raw), w.raw);
}

const char* to_string(WorkerPhase phase) noexcept {
  switch (phase) {
  case WorkerPhase::booting:
    return "Booting";
  case WorkerPhase::idle:
    return "Idle";
  case WorkerPhase::working:
    return "Working";
  case WorkerPhase::finished_pending_ack:
    return "Finished-pending-ack";
  case WorkerPhase::exited:
    return "Exited";
  }
  return "?";
}

namespace {

StepResult exit_now() { return {WorkerState::exited(), std::nullopt, WorkerAction::exit()}; }

[[noreturn]] void busy_violation(const WorkerState& state, std::uint32_t observed_slot, StatusWord w) {
  throw ProtocolViolation("Work(" + std::to_string(observed_slot) + ") observed while " +
                              to_string(state.phase) + " on slot " + std::to_string(*state.slot),
                          w.raw);
}

} // namespace

StepResult worker_step(const WorkerState& state, StatusWord observed) {
  if (state.phase == WorkerPhase::exited) {
    throw ProtocolViolation("step on an exited worker", observed.raw);
  }
  const HostCommand cmd = decode_to_gpu(observed);
  const bool is_exit = cmd.kind == HostCommand::Kind::exit;

  switch (state.phase) {
  case WorkerPhase::booting:
    if (is_exit) {
      return exit_now();
    }
    return {WorkerState::idle(), StatusWord{kThreadInit}, WorkerAction::none()};

  case WorkerPhase::idle:
    if (is_exit) {
      return exit_now();
    }
    if (cmd.kind == HostCommand::Kind::work) {
      return {WorkerState::working(cmd.slot), StatusWord{kThreadWorking}, WorkerAction::begin(cmd.slot)};
    }
    return {WorkerState::idle(), StatusWord{kThreadNop}, WorkerAction::none()};

  case WorkerPhase::working:
    // Warps are not preemptable: only a conflicting trigger is an error.
    if (cmd.kind == HostCommand::Kind::work && cmd.slot != *state.slot) {
      busy_violation(state, cmd.slot, observed);
    }
    return {state, StatusWord{kThreadWorking}, WorkerAction::none()};

  case WorkerPhase::finished_pending_ack:
    if (is_exit) {
      return exit_now();
    }
    if (cmd.kind == HostCommand::Kind::nop) {
      return {WorkerState::idle(), StatusWord{kThreadNop}, WorkerAction::none()};
    }
    if (cmd.slot != *state.slot) {
      busy_violation(state, cmd.slot, observed);
    }
    return {state, StatusWord{kThreadFinished}, WorkerAction::none()};

  case WorkerPhase::exited:
    break;
  }
  throw Error(ErrorCode::internal, "unreachable worker phase");
}

StepResult worker_complete(const WorkerState& state) {
  if (state.phase != WorkerPhase::working) {
    throw Error(ErrorCode::internal,
                std::string("completion signaled to a worker in phase ") + to_string(state.phase));
  }
  return {WorkerState::finished(*state.slot), StatusWord{kThreadFinished}, WorkerAction::none()};
}

// ---------------------------------------------------------------------------
// Trace validation
//
// The checker tracks, per SM, the joint host/worker situation that the writes
// so far imply. Reads are not recorded, so a state stands for every worker
// state consistent with the observed writes.

namespace {

enum class Joint : std::uint8_t {
  fresh,           // nothing written yet; worker booting or idle
  booted,          // INIT published, NOP not yet
  idle,            // worker idle, no command outstanding
  triggered,       // Work written, worker has not published WORKING
  working,         // WORKING published
  finished,        // FINISHED published, host has not acked
  acked,           // host rewrote NOP, worker has not republished NOP
  acked_triggered, // host triggered on the strength of the ack alone
  exit_pending,    // EXIT written; worker may still publish pre-exit words
};

struct SmTrack {
  Joint joint = Joint::fresh;
  Joint before_exit = Joint::fresh; // valid in exit_pending
  std::uint32_t slot = 0;
};

using Verdict = std::optional<std::string>;

Verdict host_write(SmTrack& t, HostCommand cmd) {
  using K = HostCommand::Kind;
  switch (t.joint) {
  case Joint::fresh:
  case Joint::booted:
  case Joint::idle:
  case Joint::finished:
  case Joint::acked:
    if (cmd.kind == K::exit) {
      t.before_exit = t.joint;
      t.joint = Joint::exit_pending;
      return {};
    }
    if (cmd.kind == K::nop) {
      if (t.joint == Joint::finished) {
        t.joint = Joint::acked;
      }
      return {};
    }
    if (t.joint == Joint::booted) {
      return "trigger before the worker published NOP";
    }
    if (t.joint == Joint::finished) {
      return "trigger on a FINISHED worker before acknowledging it";
    }
    t.slot = cmd.slot;
    t.joint = t.joint == Joint::acked ? Joint::acked_triggered : Joint::triggered;
    return {};

  case Joint::triggered:
  case Joint::acked_triggered:
    if (cmd.kind == K::work) {
      return "trigger while busy";
    }
    return "host overwrote Work(" + std::to_string(t.slot) + ") before the worker took it";

  case Joint::working:
    if (cmd.kind == K::work) {
      return "trigger while busy";
    }
    if (cmd.kind == K::nop) {
      return "acknowledge before FINISHED";
    }
    return "exit while the worker is working";

  case Joint::exit_pending:
    if (cmd.kind == K::exit) {
      return {};
    }
    return "host write after EXIT";
  }
  return "unreachable";
}

Verdict device_write(SmTrack& t, std::uint32_t word) {
  switch (t.joint) {
  case Joint::fresh:
    if (word == kThreadInit) {
      t.joint = Joint::booted;
      return {};
    }
    if (word == kThreadNop) {
      t.joint = Joint::idle;
      return {};
    }
    break;
  case Joint::booted:
    if (word == kThreadNop) {
      t.joint = Joint::idle;
      return {};
    }
    break;
  case Joint::idle:
    if (word == kThreadNop) {
      return {};
    }
    break;
  case Joint::triggered:
    if (word == kThreadNop) {
      return {};
    }
    if (word == kThreadWorking) {
      t.joint = Joint::working;
      return {};
    }
    break;
  case Joint::working:
    if (word == kThreadWorking) {
      return {};
    }
    if (word == kThreadFinished) {
      t.joint = Joint::finished;
      return {};
    }
    break;
  case Joint::finished:
    if (word == kThreadFinished) {
      return {};
    }
    break;
  case Joint::acked:
    if (word == kThreadFinished) {
      return {};
    }
    if (word == kThreadNop) {
      t.joint = Joint::idle;
      return {};
    }
    break;
  case Joint::acked_triggered:
    if (word == kThreadFinished) {
      return {};
    }
    if (word == kThreadNop) {
      t.joint = Joint::triggered;
      return {};
    }
    if (word == kThreadWorking) {
      return "worker took Work(" + std::to_string(t.slot) + ") without observing the acknowledge";
    }
    break;
  case Joint::exit_pending: {
    const Joint p = t.before_exit;
    if (word == kThreadInit && p == Joint::fresh) {
      t.before_exit = Joint::booted;
      return {};
    }
    if (word == kThreadNop && (p == Joint::fresh || p == Joint::booted || p == Joint::idle || p == Joint::acked)) {
      t.before_exit = Joint::idle;
      return {};
    }
    if (word == kThreadFinished && (p == Joint::finished || p == Joint::acked)) {
      return {};
    }
    return "device wrote " + std::to_string(word) + " after EXIT";
  }
  }
  return "device wrote " + std::to_string(word) + " out of sequence";
}

} // namespace

std::optional<Violation> validate_trace(std::span<const TraceRecord> trace) {
  std::map<std::uint32_t, SmTrack> per_sm;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const TraceRecord& rec = trace[i];
    auto fail = [&](std::string reason) {
      return Violation{i, rec, "SM " + std::to_string(rec.sm) + ": " + std::move(reason)};
    };
    if (i > 0 && rec.step <= trace[i - 1].step) {
      return fail("step " + std::to_string(rec.step) + " is not after step " + std::to_string(trace[i - 1].step));
    }
    SmTrack& track = per_sm[rec.sm];
    const StatusWord w{rec.word};
    Verdict verdict;
    if (rec.side == Side::host) {
      if (!is_legal_to_gpu(w)) {
        return fail("illegal to_GPU word " + std::to_string(rec.word));
      }
      verdict = host_write(track, decode_to_gpu(w));
    } else {
      if (!is_legal_from_gpu(w)) {
        return fail("illegal from_GPU word " + std::to_string(rec.word));
      }
      verdict = device_write(track, rec.word);
    }
    if (verdict) {
      return fail(std::move(*verdict));
    }
  }
  return std::nullopt;
}

void append_trace_line(std::string& out, const TraceRecord& rec) {
  out += std::to_string(rec.step);
  out += rec.side == Side::host ? ",H," : ",D,";
  out += std::to_string(rec.sm);
  out += ',';
  out += std::to_string(rec.word);
  out += '\n';
}

std::string format_trace(std::span<const TraceRecord> trace) {
  std::string out;
  out.reserve(trace.size() * 16);
  for (const auto& rec : trace) {
    append_trace_line(out, rec);
  }
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

template <typename T>
T parse_field(std::string_view field, const char* name, std::size_t line) {
  field = trim(field);
  T value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size() || field.empty()) {
    throw ParseError("line " + std::to_string(line) + ": bad " + name + " '" + std::string(field) + "'", line);
  }
  return value;
}

} // namespace

std::vector<TraceRecord> parse_trace(std::string_view text, std::vector<std::size_t>* line_numbers) {
  std::vector<TraceRecord> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;

    line = trim(line);
    if (line.empty() || line.front() == '#') {
      continue;
    }
    std::string_view fields[4];
    std::size_t n = 0;
    while (n < 4) {
      const auto comma = line.find(',');
      fields[n++] = line.substr(0, comma);
      if (comma == std::string_view::npos) {
        line = {};
        break;
      }
      line = line.substr(comma + 1);
    }
    if (n != 4 || !line.empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected step,side,sm_id,word", line_no);
    }
    TraceRecord rec;
    rec.step = parse_field<std::uint64_t>(fields[0], "step", line_no);
    const auto side = trim(fields[1]);
    if (side == "H") {
      rec.side = Side::host;
    } else if (side == "D") {
      rec.side = Side::device;
    } else {
      throw ParseError("line " + std::to_string(line_no) + ": side must be H or D", line_no);
    }
    rec.sm = parse_field<std::uint32_t>(fields[2], "sm_id", line_no);
    rec.word = parse_field<std::uint32_t>(fields[3], "word", line_no);
    out.push_back(rec);
    if (line_numbers) {
      line_numbers->push_back(line_no);
    }
  }
  return out;
}

} // namespace pk::protocol
