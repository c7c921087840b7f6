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

// Flat configuration text:
//
//   # comment
//   device.num_sms = 16
//   link.deferral  = indefinite
//
// Keys are dotted and fixed (see config_keys()); unknown or repeated keys are
// errors. canonical_text() prints every key in a fixed order, and its FNV-1a
// hash identifies a calibration in reports. The run seed is not part of it.

#include "persistkern/native_executor.hpp"
#include "persistkern/sim_executor.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pk {

struct BenchSettings {
  std::uint32_t reps = 100;
  std::uint64_t iterations = 20'000;      // busy_loop size of each stage
  std::uint64_t payload_bytes = 64 * 1024; // Copyin/Copyout size
};

/// SimParams defaults plus the calibrated jitter profiles.
SimParams calibrated_sim_params();

struct Config {
  SimParams sim = calibrated_sim_params(); // sim.seed is ignored; runs take the seed separately
  BenchSettings bench;
  NativeConfig native;

  /// Throws Error(config) naming the first broken invariant.
  void validate() const;
};

inline constexpr std::uint64_t kDefaultSeed = 1;

/// Every recognized key, in canonical order.
const std::vector<std::string>& config_keys();

/// Assigns one key from its text form. Throws Error(config).
void config_set(Config& cfg, std::string_view key, std::string_view value);
std::string config_get(const Config& cfg, std::string_view key);

/// Applies `text` on top of `base`. Throws ParseError (with line) or
/// Error(config). The result is validated.
Config parse_config(std::string_view text, const Config& base = Config{});
Config load_config_file(const std::string& path, const Config& base = Config{});

std::string canonical_text(const Config& cfg);
std::uint64_t config_hash(const Config& cfg);
std::string hash_hex(std::uint64_t hash); // 16 lowercase hex digits

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

} // namespace pk
