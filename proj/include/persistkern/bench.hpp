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

// Scenario runner. A run executes Init/Alloc once, then `reps` stages of
// Copyin, Trigger/Launch, Wait, Copyout, then Dispose once, and aggregates
// each phase. Init, Alloc and Dispose rows therefore hold a single sample.

#include "persistkern/config.hpp"
#include "persistkern/error.hpp"
#include "persistkern/host_api.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pk {

enum class Backend : std::uint8_t { sim, native };
enum class ModelSel : std::uint8_t { lk, baseline, both };
enum class Scope : std::uint8_t { single_sm, full_gpu };

std::string_view to_string(Backend b) noexcept;
std::string_view to_string(Scope s) noexcept;
Backend parse_backend(std::string_view text); // throws Error(invalid_argument)

struct Scenario {
  std::string name = "custom";
  Backend backend = Backend::sim;
  ModelSel model = ModelSel::both;
  Scope scope = Scope::single_sm;
  std::uint32_t reps = 100;
  WorkDescriptor work = WorkDescriptor::busy_loop(20'000);
  std::uint64_t payload_bytes = 64 * 1024;
  std::uint64_t seed = kDefaultSeed;
  bool jitter = true;
  std::optional<bool> workaround;          // overrides lk.workaround_full_board
  std::optional<DeferralPolicy> deferral;  // overrides link.deferral

  /// Scenario shaped by the bench.* keys of `cfg`.
  static Scenario from_config(const Config& cfg);
};

struct PhaseStats {
  Model model = Model::lk;
  Phase phase = Phase::trigger;
  double avg = 0;
  std::uint64_t worst = 0;
  std::uint64_t min = 0;
  double stddev = 0; // population
  double median = 0;
  std::uint32_t reps = 0;
};

/// min, max, mean, population stddev and median of `samples` (non-empty).
PhaseStats summarize(Model model, Phase phase, std::vector<std::uint64_t> samples);

struct RunFailure {
  Model model = Model::lk;
  Phase phase = Phase::trigger;
  std::uint32_t rep = 0; // 0-based stage index; 0 for Init/Alloc/Dispose
  ErrorCode code = ErrorCode::internal;
  std::string what;
};

struct RunStats {
  Backend backend = Backend::sim;
  Scope scope = Scope::single_sm;
  std::uint32_t reps = 0;
  TimeUnit unit = TimeUnit::cycles;
  std::vector<PhaseStats> rows; // LK rows first, then baseline, in phase order

  const PhaseStats* find(Model model, Phase phase) const;
  const PhaseStats& at(Model model, Phase phase) const; // throws Error(comparison)
};

struct RunResult {
  RunStats stats;
  std::optional<RunFailure> failure;
  std::vector<PhaseRow> phase_rows;
  std::vector<protocol::TraceRecord> trace; // LK mailbox writes
  std::vector<Dispatch> dispatches;
  std::optional<std::string> pin_warning;
};

RunResult run_scenario(const Config& cfg, const Scenario& s);

struct ComparisonReport {
  double trigger_ratio = 0; // base Launch avg / LK Trigger avg
  double wait_delta = 0;    // |LK Wait avg - base Wait avg| / base Wait avg
  double dispose_ratio = 0; // LK Dispose avg / base Dispose avg
  bool trigger_ok = false;
  bool wait_ok = false;
  bool dispose_ok = false;

  bool passed() const { return trigger_ok && wait_ok && dispose_ok; }
};

inline constexpr double kMinTriggerRatio = 10.0;
inline constexpr double kMaxWaitDelta = 0.15;
inline constexpr double kMinDisposeRatio = 10.0;

/// Throws Error(comparison) if the two runs differ in backend, scope or reps,
/// or a needed row is missing.
ComparisonReport compare(const RunStats& lk, const RunStats& base);

struct PathologyReport {
  bool hangs_without_workaround = false;
  bool completes_with_workaround = false;
  std::string hang_message; // from the workaround-off run, if it hung
};

/// One Init, Trigger, Wait, Dispose on the simulator, once with the
/// full-board workaround off and once with it on.
PathologyReport pathology_scenario(const Config& cfg, Scope scope, DeferralPolicy policy, std::uint64_t seed);

/// Every mailbox Work write of the host is matched by exactly one worker
/// dispatch of the same slot on the same SM, in order. Returns the first
/// mismatch.
std::optional<std::string> check_exactly_once(const std::vector<protocol::TraceRecord>& trace,
                                              const std::vector<Dispatch>& dispatches);

// ---------------------------------------------------------------------------
// Named scenarios

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct LabeledStats {
  std::string label; // CSV `scenario` column
  RunStats stats;
};

struct ScenarioReport {
  std::string scenario;
  Backend backend = Backend::sim;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<LabeledStats> runs;
  std::optional<ComparisonReport> comparison;
  std::optional<PathologyReport> pathology;
  std::vector<Check> checks;
  std::vector<std::string> notes;
  std::optional<RunFailure> failure;
  std::vector<PhaseRow> phase_rows;
  std::vector<protocol::TraceRecord> trace;

  bool passed() const;
};

struct RunOptions {
  std::uint64_t seed = kDefaultSeed;
  Backend backend = Backend::sim;
  std::optional<bool> workaround;
};

const std::vector<std::string>& scenario_names();

/// Throws Error(unknown_scenario) for unknown names and Error(invalid_argument)
/// for scenarios the backend cannot run. Hangs and threshold misses are
/// reported, not thrown.
ScenarioReport run_named_scenario(const std::string& name, const Config& cfg, const RunOptions& opts);

/// `scenario,model,phase,avg,worst,min,stddev,reps` preceded by `#` lines.
std::string format_report_csv(const ScenarioReport& r);
/// Average and worst value blocks, LK next to BASE.
std::string format_report_table(const ScenarioReport& r);

/// Calibration constants, with the reference averages next to what
/// the simulator produces for them under `cfg` (jitter on, default seed).
std::string calibration_report(const Config& cfg);

/// 239 -> "239", 3880 -> "3.9k", 190000 -> "190k", 29995236 -> "30M".
std::string human_count(double v);

} // namespace pk
