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

// Host <-> device interconnect cost model.
//
// A transfer of b bytes costs
//
//   base_latency + ceil(b / (peak_bytes_per_cycle * f(b)))
//
// where f ramps linearly from `ramp_floor` at 0 bytes to 1 at
// `saturation_bytes`. Transfers strictly smaller than the coalescing
// threshold are subject to the driver deferral policy; `indefinite` models a
// driver that never flushes them and is reported as a value, not a wait.

#include "persistkern/device_model.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace pk {

enum class DeferralKind : std::uint8_t { none, delay, indefinite };

struct DeferralPolicy {
  DeferralKind kind = DeferralKind::indefinite;
  Cycles delay_cycles = 0; // for DeferralKind::delay

  static DeferralPolicy none() { return {DeferralKind::none, 0}; }
  static DeferralPolicy delay(Cycles d) { return {DeferralKind::delay, d}; }
  static DeferralPolicy indefinite() { return {DeferralKind::indefinite, 0}; }

  /// "none", "indefinite" or "delay:<cycles>".
  static DeferralPolicy parse(const std::string& text);
  std::string to_string() const;

  friend bool operator==(DeferralPolicy, DeferralPolicy) = default;
};

struct LinkModel {
  Cycles base_latency_cycles = 80;
  /// 15 GB/s at the 3.6 GHz reporting clock.
  double peak_bytes_per_cycle = 15.0e9 / 3.6e9;
  double ramp_floor = 0.25;
  std::uint64_t saturation_bytes = 64 * 1024;
  std::uint64_t small_transfer_threshold_bytes = 64;
  DeferralPolicy deferral = DeferralPolicy::indefinite();
  /// Delay before a device-side mailbox write shows up in host memory.
  Cycles d2h_flush_cycles = 170'000;
  /// Delay between a kernel retiring and the host runtime noticing.
  Cycles completion_signal_cycles = 155'000;

  std::optional<std::string> check() const;

  /// Effective-bandwidth fraction, nondecreasing, 1 at and above saturation.
  double ramp(std::uint64_t bytes) const noexcept;
};

/// Cycles for one transfer, or empty when the driver defers it forever.
using TransferCost = std::optional<Cycles>;

TransferCost transfer_cycles(const LinkModel& link, std::uint64_t bytes);

enum class SyncScope : std::uint8_t { single_sm, full_board };

/// Bytes moved by one mailbox sync. The full-board workaround always ships the
/// whole serialized mailboard; otherwise a single-SM sync moves one word.
std::uint64_t mailbox_sync_bytes(const Device& device, SyncScope scope, bool workaround_full_board);

/// Same, for an arbitrary mask: all SMs or the workaround mean the whole
/// board, otherwise one word per selected SM.
std::uint64_t mailbox_sync_bytes(const Device& device, SmMask mask, bool workaround_full_board);

TransferCost mailbox_sync_cost(const LinkModel& link, const Device& device, SyncScope scope,
                               bool workaround_full_board);

} // namespace pk
