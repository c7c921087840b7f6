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

#include "persistkern/link_model.hpp"

#include "persistkern/error.hpp"

#include <algorithm>
#include <cmath>

namespace pk {

DeferralPolicy DeferralPolicy::parse(const std::string& text) {
  if (text == "none") {
    return none();
  }
  if (text == "indefinite") {
    return indefinite();
  }
  if (text.rfind("delay:", 0) == 0) {
    const std::string n = text.substr(6);
    if (!n.empty() && n.find_first_not_of("0123456789") == std::string::npos && n.size() < 20) {
      return delay(std::stoull(n));
    }
  }
  throw Error(ErrorCode::config, "link.deferral must be none, indefinite or delay:<cycles>, got '" + text + "'");
}

std::string DeferralPolicy::to_string() const {
  switch (kind) {
  case DeferralKind::none:
    return "none";
  case DeferralKind::delay:
    return "delay:" + std::to_string(delay_cycles);
  case DeferralKind::indefinite:
    return "indefinite";
  }
  return "?";
}

std::optional<std::string> LinkModel::check() const {
  if (!(peak_bytes_per_cycle > 0.0) || !std::isfinite(peak_bytes_per_cycle)) {
    return "link.peak_bytes_per_cycle must be positive";
  }
  if (!(ramp_floor > 0.0) || ramp_floor > 1.0) {
    return "link.ramp_floor must be in (0, 1]";
  }
  if (saturation_bytes == 0) {
    return "link.saturation_bytes must be positive";
  }
  return std::nullopt;
}

double LinkModel::ramp(std::uint64_t bytes) const noexcept {
  if (bytes >= saturation_bytes) {
    return 1.0;
  }
  const double x = static_cast<double>(bytes) / static_cast<double>(saturation_bytes);
  return std::min(1.0, ramp_floor + (1.0 - ramp_floor) * x);
}

TransferCost transfer_cycles(const LinkModel& link, std::uint64_t bytes) {
  const bool small = bytes < link.small_transfer_threshold_bytes;
  if (small && link.deferral.kind == DeferralKind::indefinite) {
    return std::nullopt;
  }
  Cycles cycles = link.base_latency_cycles;
  if (bytes > 0) {
    const double wire = static_cast<double>(bytes) / (link.peak_bytes_per_cycle * link.ramp(bytes));
    cycles += static_cast<Cycles>(std::ceil(wire));
  }
  if (small && link.deferral.kind == DeferralKind::delay) {
    cycles += link.deferral.delay_cycles;
  }
  return cycles;
}

std::uint64_t mailbox_sync_bytes(const Device& device, SyncScope scope, bool workaround_full_board) {
  if (scope == SyncScope::full_board || workaround_full_board) {
    return device.board.serialized_bytes();
  }
  return protocol::kWordBytes;
}

std::uint64_t mailbox_sync_bytes(const Device& device, SmMask mask, bool workaround_full_board) {
  if (workaround_full_board || mask == SmMask::all(device.config.num_sms)) {
    return device.board.serialized_bytes();
  }
  return static_cast<std::uint64_t>(mask.count()) * protocol::kWordBytes;
}

TransferCost mailbox_sync_cost(const LinkModel& link, const Device& device, SyncScope scope,
                               bool workaround_full_board) {
  return transfer_cycles(link, mailbox_sync_bytes(device, scope, workaround_full_board));
}

} // namespace pk
