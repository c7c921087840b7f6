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

#include "persistkern/protocol.hpp"

#include <bit>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pk {

using Cycles = std::uint64_t;

/// Exact non-negative rational, parsed from decimal text ("1.5" -> 3/2) so
/// cost products round the same way on every platform.
struct Ratio {
  std::uint64_t num = 1;
  std::uint64_t den = 1;

  static Ratio parse(std::string_view text); // throws Error(config)
  double to_double() const noexcept { return static_cast<double>(num) / static_cast<double>(den); }
  std::string to_string() const;

  /// ceil(n * num / den) without intermediate overflow.
  std::uint64_t ceil_mul(std::uint64_t n) const noexcept;

  friend bool operator==(const Ratio& a, const Ratio& b) {
    return static_cast<unsigned __int128>(a.num) * b.den == static_cast<unsigned __int128>(b.num) * a.den;
  }
};

struct DeviceConfig {
  std::uint32_t num_sms = 16;
  std::uint32_t threads_per_sm = 128;
  std::uint32_t warp_width = 32;
  Ratio cycles_per_iteration{1, 1};
  std::uint64_t clock_hz = 3'600'000'000ULL; // reporting only

  /// Empty when every invariant holds, otherwise the first broken one.
  std::optional<std::string> check() const;
};

inline constexpr std::uint32_t kMaxSms = 64;

/// Bit i selects SM i.
class SmMask {
public:
  constexpr SmMask() = default;
  constexpr explicit SmMask(std::uint64_t bits) : bits_(bits) {}

  static constexpr SmMask single(std::uint32_t sm) { return SmMask(std::uint64_t{1} << sm); }
  static constexpr SmMask all(std::uint32_t num_sms) {
    return SmMask(num_sms >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << num_sms) - 1);
  }

  constexpr std::uint64_t bits() const { return bits_; }
  constexpr bool contains(std::uint32_t sm) const { return sm < 64 && ((bits_ >> sm) & 1U) != 0; }
  constexpr int count() const { return std::popcount(bits_); }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr bool fits(std::uint32_t num_sms) const { return (bits_ & ~all(num_sms).bits_) == 0; }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (std::uint64_t b = bits_; b != 0; b &= b - 1) {
      fn(static_cast<std::uint32_t>(std::countr_zero(b)));
    }
  }

  std::string to_hex() const;

  friend constexpr bool operator==(SmMask, SmMask) = default;

private:
  std::uint64_t bits_ = 0;
};

enum class WorkKind : std::uint8_t { busy_loop };

struct WorkDescriptor {
  std::uint32_t slot = 0;
  WorkKind kind = WorkKind::busy_loop;
  std::uint64_t iterations = 0;
  const void* data_in = nullptr;  // null for compute-bound work
  void* data_out = nullptr;

  static WorkDescriptor busy_loop(std::uint64_t iterations, std::uint32_t slot = 0) {
    return {slot, WorkKind::busy_loop, iterations, nullptr, nullptr};
  }
};

struct MailboxPair {
  protocol::StatusWord to_gpu{protocol::kThreadNop};
  protocol::StatusWord from_gpu{protocol::kThreadInit};
};

struct Mailboard {
  std::vector<MailboxPair> entries;

  std::size_t size() const { return entries.size(); }
  /// Both directions, one word per cell.
  std::size_t serialized_bytes() const { return 2 * entries.size() * protocol::kWordBytes; }
};

struct SmState {
  std::uint32_t sm_id = 0;
  protocol::WorkerState protocol;
  std::optional<Cycles> busy_until; // present iff protocol phase is working
};

struct Device {
  DeviceConfig config;
  std::vector<SmState> sms;
  Mailboard board;
  std::vector<std::uint32_t> block_to_sm; // block b runs on SM block_to_sm[b]
};

/// Throws Error(config) when `cfg` breaks an invariant.
Device build_device(const DeviceConfig& cfg);

struct BlockMismatch {
  std::uint32_t block_id;
  std::uint32_t sm_id;
  friend bool operator==(BlockMismatch, BlockMismatch) = default;
};

/// Each persistent block compares its SM number with its block id.
std::optional<BlockMismatch> check_block_mapping(const Device& device);

/// Test hook for the mapping check.
void swap_block_assignment(Device& device, std::uint32_t a, std::uint32_t b);

/// ceil(iterations * cycles_per_iteration). Throws Error(unsupported_workload)
/// for kinds the model does not know.
Cycles work_cost(const DeviceConfig& cfg, const WorkDescriptor& w);

/// Retire cycle of each warp of one SM running `w`. A warp retires at the
/// latest of its lanes; busy_loop lanes are uniform so every entry is equal.
std::vector<Cycles> warp_retire_cycles(const DeviceConfig& cfg, const WorkDescriptor& w);

} // namespace pk
