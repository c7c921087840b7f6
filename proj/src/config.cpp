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

#include "persistkern/config.hpp"

#include "persistkern/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace pk {

namespace {

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw Error(ErrorCode::config,
              "bad value '" + std::string(value) + "' for " + std::string(key) + ": expected " + expected);
}

template <typename T>
T parse_uint(std::string_view key, std::string_view v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || v.empty()) {
    bad_value(key, v, "a non-negative integer");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || v.empty() || !std::isfinite(out)) {
    bad_value(key, v, "a finite number");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "on" || v == "1") {
    return true;
  }
  if (v == "false" || v == "off" || v == "0") {
    return false;
  }
  bad_value(key, v, "true/false");
}

std::string fmt_double(double d) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, p);
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct Binding {
  std::string key;
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, std::string_view)> set;
};

#define PK_UINT(KEY, MEMBER)                                                                                         \
  Binding {                                                                                                          \
    KEY, [](const Config& c) { return std::to_string(c.MEMBER); },                                                   \
        [](Config& c, std::string_view v) { c.MEMBER = parse_uint<decltype(c.MEMBER)>(KEY, v); }                     \
  }
#define PK_DOUBLE(KEY, MEMBER)                                                                                       \
  Binding {                                                                                                          \
    KEY, [](const Config& c) { return fmt_double(c.MEMBER); },                                                       \
        [](Config& c, std::string_view v) { c.MEMBER = parse_double(KEY, v); }                                       \
  }
#define PK_BOOL(KEY, MEMBER)                                                                                         \
  Binding {                                                                                                          \
    KEY, [](const Config& c) { return fmt_bool(c.MEMBER); },                                                         \
        [](Config& c, std::string_view v) { c.MEMBER = parse_bool(KEY, v); }                                         \
  }
#define PK_RATIO(KEY, MEMBER)                                                                                        \
  Binding {                                                                                                          \
    KEY, [](const Config& c) { return c.MEMBER.to_string(); },                                                       \
        [](Config& c, std::string_view v) { c.MEMBER = Ratio::parse(v); }                                            \
  }
#define PK_JITTER(PREFIX, MEMBER)                                                                                    \
  PK_UINT(PREFIX ".uniform_max", MEMBER.uniform_max), PK_UINT(PREFIX ".spike_per_mille", MEMBER.spike_per_mille),   \
      PK_UINT(PREFIX ".spike_min", MEMBER.spike_min), PK_UINT(PREFIX ".spike_max", MEMBER.spike_max)

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = {
      PK_UINT("device.num_sms", sim.device.num_sms),
      PK_UINT("device.threads_per_sm", sim.device.threads_per_sm),
      PK_UINT("device.warp_width", sim.device.warp_width),
      PK_RATIO("device.cycles_per_iteration", sim.device.cycles_per_iteration),
      PK_UINT("device.clock_hz", sim.device.clock_hz),

      PK_UINT("link.base_latency_cycles", sim.link.base_latency_cycles),
      PK_DOUBLE("link.peak_bytes_per_cycle", sim.link.peak_bytes_per_cycle),
      PK_DOUBLE("link.ramp_floor", sim.link.ramp_floor),
      PK_UINT("link.saturation_bytes", sim.link.saturation_bytes),
      PK_UINT("link.small_transfer_threshold_bytes", sim.link.small_transfer_threshold_bytes),
      Binding{"link.deferral", [](const Config& c) { return c.sim.link.deferral.to_string(); },
              [](Config& c, std::string_view v) { c.sim.link.deferral = DeferralPolicy::parse(std::string(v)); }},
      PK_UINT("link.d2h_flush_cycles", sim.link.d2h_flush_cycles),
      PK_UINT("link.completion_signal_cycles", sim.link.completion_signal_cycles),

      PK_UINT("lk.init_boot_cycles", sim.calibration.lk_init_boot_cycles),
      PK_UINT("lk.host_write_cycles", sim.calibration.lk_host_write_cycles),
      PK_UINT("lk.poll_interval_cycles", sim.calibration.lk_poll_interval_cycles),
      PK_UINT("lk.dispose_teardown_cycles", sim.calibration.lk_dispose_teardown_cycles),
      PK_BOOL("lk.workaround_full_board", sim.calibration.workaround_full_board),

      PK_UINT("baseline.alloc_cycles", sim.calibration.base_alloc_cycles),
      PK_UINT("baseline.launch_setup_cycles", sim.calibration.base_launch_setup_cycles),
      PK_UINT("baseline.launch_payload_bytes", sim.calibration.base_launch_payload_bytes),
      PK_UINT("baseline.dispose_cycles", sim.calibration.base_dispose_cycles),

      PK_JITTER("jitter.link", sim.jitter.link),
      PK_JITTER("jitter.runtime", sim.jitter.runtime),

      PK_UINT("sim.hang_budget_cycles", sim.hang_budget_cycles),

      PK_UINT("bench.reps", bench.reps),
      PK_UINT("bench.iterations", bench.iterations),
      PK_UINT("bench.payload_bytes", bench.payload_bytes),

      PK_UINT("native.num_workers", native.num_workers),
      PK_BOOL("native.pin_to_cores", native.pin_to_cores),
      Binding{"native.spin_strategy", [](const Config& c) { return std::string(to_string(c.native.spin_strategy)); },
              [](Config& c, std::string_view v) { c.native.spin_strategy = parse_spin_strategy(v); }},
      PK_UINT("native.yield_threshold", native.yield_threshold),
      PK_RATIO("native.ns_per_iteration", native.ns_per_iteration),
      PK_UINT("native.timeout_ms", native.timeout_ms),
  };
  return table;
}

#undef PK_UINT
#undef PK_DOUBLE
#undef PK_BOOL
#undef PK_RATIO
#undef PK_JITTER

const Binding& find(std::string_view key) {
  for (const auto& b : bindings()) {
    if (b.key == key) {
      return b;
    }
  }
  throw Error(ErrorCode::config, "unknown config key '" + std::string(key) + "'");
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

} // namespace

// Link jitter: up to 10 cycles, plus a 600..900 cycle spike on 4% of
// transfers. Runtime jitter on baseline launches: up to 100 cycles, plus a
// 3000..4000 cycle spike on 10% of launches.
SimParams calibrated_sim_params() {
  SimParams p;
  p.jitter.link = {10, 40, 600, 900};
  p.jitter.runtime = {100, 100, 3000, 4000};
  return p;
}

void Config::validate() const {
  for (const auto& why : {sim.device.check(), sim.link.check(), sim.calibration.check(),
                          sim.jitter.link.check("jitter.link"), sim.jitter.runtime.check("jitter.runtime"),
                          native.check()}) {
    if (why) {
      throw Error(ErrorCode::config, *why);
    }
  }
  if (sim.hang_budget_cycles == 0) {
    throw Error(ErrorCode::config, "sim.hang_budget_cycles must be positive");
  }
  if (bench.reps < 1) {
    throw Error(ErrorCode::config, "bench.reps must be at least 1");
  }
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& b : bindings()) {
      out.push_back(b.key);
    }
    return out;
  }();
  return keys;
}

void config_set(Config& cfg, std::string_view key, std::string_view value) { find(key).set(cfg, trim(value)); }

std::string config_get(const Config& cfg, std::string_view key) { return find(key).get(cfg); }

Config parse_config(std::string_view text, const Config& base) {
  Config cfg = base;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 'key = value'", line_no);
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (!seen.insert(std::string(key)).second) {
      throw ParseError("line " + std::to_string(line_no) + ": duplicate key '" + std::string(key) + "'", line_no);
    }
    try {
      config_set(cfg, key, value);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw Error(ErrorCode::config, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

Config load_config_file(const std::string& path, const Config& base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::io, "cannot read config file '" + path + "'");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str(), base);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.line());
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.what());
  }
}

std::string canonical_text(const Config& cfg) {
  std::string out;
  for (const auto& b : bindings()) {
    out += b.key;
    out += " = ";
    out += b.get(cfg);
    out += '\n';
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char ch : bytes) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t config_hash(const Config& cfg) { return fnv1a64(canonical_text(cfg)); }

std::string hash_hex(std::uint64_t hash) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[hash & 0xF];
    hash >>= 4;
  }
  return out;
}

} // namespace pk
