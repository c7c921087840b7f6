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

// Dual-mailbox wire format and the persistent worker handshake.
//
// Each SM owns two word-sized cells. The host writes `to_gpu`, the worker
// writes `from_gpu`. Values:
//
//   from_gpu: 0 INIT, 1 FINISHED, 2 WORKING, 4 NOP
//   to_gpu:   4 NOP, 8 EXIT, 16 + slot WORK(slot)
//
// The host acknowledges a FINISHED worker by rewriting NOP; the worker then
// returns to idle and republishes NOP.

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pk::protocol {

inline constexpr std::uint32_t kThreadInit = 0;
inline constexpr std::uint32_t kThreadFinished = 1;
inline constexpr std::uint32_t kThreadWorking = 2;
inline constexpr std::uint32_t kThreadNop = 4;
inline constexpr std::uint32_t kThreadExit = 8;
inline constexpr std::uint32_t kThreadWorkBase = 16;
inline constexpr std::uint32_t kMaxSlot = std::numeric_limits<std::uint32_t>::max() - kThreadWorkBase;
inline constexpr std::size_t kWordBytes = sizeof(std::uint32_t);

struct StatusWord {
  std::uint32_t raw = kThreadNop;

  friend constexpr bool operator==(StatusWord, StatusWord) = default;
};

bool is_legal_from_gpu(StatusWord w) noexcept;
bool is_legal_to_gpu(StatusWord w) noexcept;

struct HostCommand {
  enum class Kind : std::uint8_t { nop, exit, work };

  Kind kind = Kind::nop;
  std::uint32_t slot = 0; // meaningful for work only

  static constexpr HostCommand nop() { return {Kind::nop, 0}; }
  static constexpr HostCommand exit() { return {Kind::exit, 0}; }
  static constexpr HostCommand work(std::uint32_t slot) { return {Kind::work, slot}; }

  friend constexpr bool operator==(HostCommand, HostCommand) = default;
};

std::string to_string(HostCommand cmd);

/// Throws pk::Error(encoding) when the slot does not fit in a word.
StatusWord encode_to_gpu(HostCommand cmd);
std::optional<StatusWord> try_encode_to_gpu(HostCommand cmd) noexcept;

/// Throws ProtocolViolation naming the raw word for anything outside the
/// to_gpu value set.
HostCommand decode_to_gpu(StatusWord w);

enum class WorkerPhase : std::uint8_t { booting, idle, working, finished_pending_ack, exited };

const char* to_string(WorkerPhase phase) noexcept;

struct WorkerState {
  WorkerPhase phase = WorkerPhase::booting;
  std::optional<std::uint32_t> slot; // present iff working / finished_pending_ack

  static WorkerState booting() { return {}; }
  static WorkerState idle() { return {WorkerPhase::idle, std::nullopt}; }
  static WorkerState working(std::uint32_t s) { return {WorkerPhase::working, s}; }
  static WorkerState finished(std::uint32_t s) { return {WorkerPhase::finished_pending_ack, s}; }
  static WorkerState exited() { return {WorkerPhase::exited, std::nullopt}; }

  friend bool operator==(const WorkerState&, const WorkerState&) = default;
};

struct WorkerAction {
  enum class Kind : std::uint8_t { none, begin_work, exit };

  Kind kind = Kind::none;
  std::uint32_t slot = 0;

  static constexpr WorkerAction none() { return {}; }
  static constexpr WorkerAction begin(std::uint32_t s) { return {Kind::begin_work, s}; }
  static constexpr WorkerAction exit() { return {Kind::exit, 0}; }

  friend constexpr bool operator==(WorkerAction, WorkerAction) = default;
};

struct StepResult {
  WorkerState next;
  std::optional<StatusWord> publish; // empty only on exit
  WorkerAction action;

  friend bool operator==(const StepResult&, const StepResult&) = default;
};

/// One spin iteration of the persistent worker: observe `to_gpu`, decide what
/// to publish on `from_gpu`. Throws ProtocolViolation for an illegal word, a
/// different Work observed while busy, or a step on an exited worker.
StepResult worker_step(const WorkerState& state, StatusWord observed);

/// The executor's completion signal for the running work item.
/// Working(s) -> FinishedPendingAck(s), publishing FINISHED.
StepResult worker_complete(const WorkerState& state);

// ---------------------------------------------------------------------------
// Traces

enum class Side : std::uint8_t { host, device };

struct TraceRecord {
  std::uint64_t step = 0;
  Side side = Side::host;
  std::uint32_t sm = 0;
  std::uint32_t word = 0;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct Violation {
  std::size_t index = 0; // position in the trace
  TraceRecord record;
  std::string reason;
};

/// Replays every per-SM subsequence against the worker transition relation
/// and the host write rules; reports the first illegal write.
std::optional<Violation> validate_trace(std::span<const TraceRecord> trace);

/// `step,side(H|D),sm_id,word` per line, decimal.
std::string format_trace(std::span<const TraceRecord> trace);
void append_trace_line(std::string& out, const TraceRecord& rec);

/// Blank lines and lines starting with '#' are skipped. Throws ParseError
/// carrying the 1-based line number. When `line_numbers` is given it receives
/// the source line of each returned record.
std::vector<TraceRecord> parse_trace(std::string_view text,
                                     std::vector<std::size_t>* line_numbers = nullptr);

} // namespace pk::protocol
