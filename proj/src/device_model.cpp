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

#include "persistkern/device_model.hpp"

#include "persistkern/error.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <numeric>
#include <utility>

namespace pk {

namespace {

[[noreturn]] void bad_ratio(std::string_view text) {
  throw Error(ErrorCode::config, "not a non-negative rational: '" + std::string(text) + "'");
}

std::uint64_t parse_u64(std::string_view digits, std::string_view whole) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
  if (digits.empty() || ec != std::errc{} || ptr != digits.data() + digits.size()) {
    bad_ratio(whole);
  }
  return v;
}

} // namespace

Ratio Ratio::parse(std::string_view text) {
  Ratio r;
  if (const auto slash = text.find('/'); slash != std::string_view::npos) {
    r.num = parse_u64(text.substr(0, slash), text);
    r.den = parse_u64(text.substr(slash + 1), text);
  } else if (const auto dot = text.find('.'); dot != std::string_view::npos) {
    const auto int_part = text.substr(0, dot);
    const auto frac = text.substr(dot + 1);
    if (frac.empty() || frac.size() > 12) {
      bad_ratio(text);
    }
    std::uint64_t scale = 1;
    for (std::size_t i = 0; i < frac.size(); ++i) {
      scale *= 10;
    }
    const std::uint64_t whole = int_part.empty() ? 0 : parse_u64(int_part, text);
    const std::uint64_t f = parse_u64(frac, text);
    if (whole > (~std::uint64_t{0} - f) / scale) {
      bad_ratio(text);
    }
    r.num = whole * scale + f;
    r.den = scale;
  } else {
    r.num = parse_u64(text, text);
    r.den = 1;
  }
  if (r.den == 0) {
    bad_ratio(text);
  }
  const auto g = std::gcd(r.num, r.den);
  if (g > 1) {
    r.num /= g;
    r.den /= g;
  }
  return r;
}

std::string Ratio::to_string() const {
  if (den == 1) {
    return std::to_string(num);
  }
  return std::to_string(num) + "/" + std::to_string(den);
}

std::uint64_t Ratio::ceil_mul(std::uint64_t n) const noexcept {
  const unsigned __int128 p = static_cast<unsigned __int128>(n) * num;
  return static_cast<std::uint64_t>((p + den - 1) / den);
}

std::optional<std::string> DeviceConfig::check() const {
  if (num_sms < 1) {
    return "device.num_sms must be at least 1";
  }
  if (num_sms > kMaxSms) {
    return "device.num_sms must not exceed " + std::to_string(kMaxSms);
  }
  if (threads_per_sm < 1) {
    return "device.threads_per_sm must be positive";
  }
  if (warp_width < 1) {
    return "device.warp_width must be positive";
  }
  if (threads_per_sm % warp_width != 0) {
    return "device.warp_width (" + std::to_string(warp_width) + ") must divide device.threads_per_sm (" +
           std::to_string(threads_per_sm) + ")";
  }
  if (cycles_per_iteration.num == 0) {
    return "device.cycles_per_iteration must be positive";
  }
  if (clock_hz == 0) {
    return "device.clock_hz must be positive";
  }
  return std::nullopt;
}

std::string SmMask::to_hex() const {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(bits_));
  return buf;
}

Device build_device(const DeviceConfig& cfg) {
  if (auto why = cfg.check()) {
    throw Error(ErrorCode::config, *why);
  }
  Device d;
  d.config = cfg;
  d.sms.resize(cfg.num_sms);
  d.board.entries.resize(cfg.num_sms);
  d.block_to_sm.resize(cfg.num_sms);
  for (std::uint32_t i = 0; i < cfg.num_sms; ++i) {
    d.sms[i].sm_id = i;
    d.block_to_sm[i] = i; // round-robin with B == num_sms
  }
  return d;
}

std::optional<BlockMismatch> check_block_mapping(const Device& device) {
  for (std::uint32_t block = 0; block < device.block_to_sm.size(); ++block) {
    if (device.block_to_sm[block] != block) {
      return BlockMismatch{block, device.block_to_sm[block]};
    }
  }
  return std::nullopt;
}

void swap_block_assignment(Device& device, std::uint32_t a, std::uint32_t b) {
  if (a >= device.block_to_sm.size() || b >= device.block_to_sm.size()) {
    throw Error(ErrorCode::invalid_argument, "block index out of range");
  }
  std::swap(device.block_to_sm[a], device.block_to_sm[b]);
}

Cycles work_cost(const DeviceConfig& cfg, const WorkDescriptor& w) {
  switch (w.kind) {
  case WorkKind::busy_loop:
    return cfg.cycles_per_iteration.ceil_mul(w.iterations);
  }
  throw Error(ErrorCode::unsupported_workload, "unknown workload kind");
}

std::vector<Cycles> warp_retire_cycles(const DeviceConfig& cfg, const WorkDescriptor& w) {
  const std::uint32_t warps = cfg.threads_per_sm / cfg.warp_width;
  std::vector<Cycles> out;
  out.reserve(warps);
  for (std::uint32_t warp = 0; warp < warps; ++warp) {
    Cycles retire = 0;
    for (std::uint32_t lane = 0; lane < cfg.warp_width; ++lane) {
      retire = std::max(retire, work_cost(cfg, w)); // lockstep: the slowest lane decides
    }
    out.push_back(retire);
  }
  return out;
}

} // namespace pk
