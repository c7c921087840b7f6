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

// Prints one PASS/FAIL line per acceptance criterion and exits non-zero if
// any of them fails.

#include "persistkern/bench.hpp"
#include "persistkern/error.hpp"
#include "persistkern/protocol.hpp"
#include "persistkern/sim_executor.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

using namespace pk;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* title, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (limit_s > 0 && secs >= limit_s) {
    o.passed = false;
    o.detail += " (over the " + std::to_string(static_cast<int>(limit_s)) + " s budget)";
  }
  failures += o.passed ? 0 : 1;
  std::printf("%s %d %s: %s [%.2f s]\n", o.passed ? "PASS" : "FAIL", id, title, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

const RunStats& run_labeled(const ScenarioReport& r, const std::string& label) {
  for (const auto& run : r.runs) {
    if (run.label == label) {
      return run.stats;
    }
  }
  throw Error(ErrorCode::comparison, "no run labeled " + label);
}

bool ordered(const RunStats& st) {
  for (const auto& row : st.rows) {
    if (!(static_cast<double>(row.min) <= row.avg && row.avg <= static_cast<double>(row.worst))) {
      return false;
    }
  }
  return !st.rows.empty();
}

// One randomized LK program on a fresh simulated device. Returns an error
// text, or empty on success.
std::string random_sim_program(std::mt19937_64& rng, const Config& cfg) {
  SimParams p = cfg.sim;
  p.seed = rng();
  p.device.num_sms = 8 + static_cast<std::uint32_t>(rng() % 9); // boards of at least 64 bytes
  const std::uint32_t n = p.device.num_sms;
  SimExecutor sim(p);
  LkSession lk(sim);
  lk.init();
  std::uint64_t outstanding = 0;
  const int ops = 4 + static_cast<int>(rng() % 24);
  for (int op = 0; op < ops; ++op) {
    const std::uint64_t idle = ~outstanding & SmMask::all(n).bits();
    const auto roll = rng() % 4;
    if (idle != 0 && roll < 2) {
      std::uint64_t m = idle & rng();
      if (m == 0) {
        m = idle & (~idle + 1);
      }
      const auto work = WorkDescriptor::busy_loop(rng() % 50'000, static_cast<std::uint32_t>(rng() % 256));
      // Slots held by running work keep their descriptor; pick a fresh one on conflict.
      try {
        lk.trigger(SmMask(m), work);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::busy) {
          throw;
        }
        continue;
      }
      outstanding |= m;
    } else if (roll == 2) {
      lk.copyin(64 + rng() % 100'000); // smaller copies are deferred forever by default
    } else if (outstanding != 0) {
      std::uint64_t m = outstanding & rng();
      if (m == 0) {
        m = outstanding;
      }
      lk.wait(SmMask(m));
      outstanding &= ~m;
    }
  }
  if (outstanding != 0) {
    lk.wait(SmMask(outstanding));
  }
  lk.dispose();

  const auto trace = sim.trace();
  if (auto v = protocol::validate_trace(trace)) {
    return "trace violation: " + v->reason;
  }
  if (auto m = check_exactly_once(trace, sim.dispatches())) {
    return "exactly-once: " + *m;
  }

  // Corrupt one device word of the recorded trace.
  std::vector<std::size_t> device_records;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (trace[i].side == protocol::Side::device) {
      device_records.push_back(i);
    }
  }
  auto bad = trace;
  const std::size_t at = device_records[rng() % device_records.size()];
  static constexpr std::uint32_t kIllegalFrom[] = {3, 5, 6, 7, 8, 9, 15, 16, 17, 255, 0xFFFFFFFF};
  bad[at].word = kIllegalFrom[rng() % std::size(kIllegalFrom)];
  const auto v = protocol::validate_trace(bad);
  if (!v || v->index != at) {
    return "corrupted device word at record " + std::to_string(at) + " not reported";
  }

  // Inject an illegal to_GPU word into a live device.
  static constexpr std::uint32_t kIllegalTo[] = {0, 1, 2, 3, 5, 6, 7, 9, 10, 11, 12, 13, 14, 15};
  SimExecutor live(p);
  LkSession lk2(live);
  lk2.init();
  const auto target = static_cast<std::uint32_t>(rng() % n);
  if (rng() % 2) {
    lk2.trigger(SmMask::single(target), WorkDescriptor::busy_loop(rng() % 10'000));
  }
  const std::uint32_t word = kIllegalTo[rng() % std::size(kIllegalTo)];
  try {
    live.inject_to_gpu(target, word);
    live.drain();
  } catch (const ProtocolViolation& e) {
    if (e.raw_word() != word) {
      return "injected word " + std::to_string(word) + " reported as " + std::to_string(e.raw_word());
    }
    return {};
  }
  return "injected word " + std::to_string(word) + " on SM " + std::to_string(target) + " went unnoticed";
}

} // namespace

int main() {
  const Config cfg;
  const RunOptions opts;

  ScenarioReport single;
  bool single_ok = true;
  try {
    single = run_named_scenario("table2-single-sm", cfg, opts);
  } catch (const std::exception& e) {
    single_ok = false;
    std::printf("table2-single-sm did not run: %s\n", e.what());
  }
  auto single_stats = [&]() -> const RunStats& { return run_labeled(single, "table2-single-sm"); };

  criterion(1, "trigger advantage (table2-single-sm)", 5, [&] {
    const auto again = run_named_scenario("table2-single-sm", cfg, opts); // timed run
    const auto& st = run_labeled(again, "table2-single-sm");
    const double spawn = st.at(Model::baseline, Phase::launch).avg;
    const double trig = st.at(Model::lk, Phase::trigger).avg;
    const double ratio = spawn / trig;
    return Outcome{single_ok && !again.failure && st.reps == 100 && ratio >= 10.0,
                   fmt("spawn %.0f / trigger %.1f = %.2f, need >= 10", spawn, trig, ratio)};
  });

  criterion(2, "wait parity (table2-single-sm)", 0, [&] {
    const auto& st = single_stats();
    const double lw = st.at(Model::lk, Phase::wait).avg;
    const double bw = st.at(Model::baseline, Phase::wait).avg;
    const double d = std::fabs(lw - bw) / bw;
    return Outcome{d <= 0.15, fmt("|%.0f - %.0f| / base = %.4f, need <= 0.15", lw, bw, d)};
  });

  criterion(3, "dispose penalty (table2-single-sm)", 0, [&] {
    const auto& st = single_stats();
    const double ld = st.at(Model::lk, Phase::dispose).avg;
    const double bd = st.at(Model::baseline, Phase::dispose).avg;
    return Outcome{ld / bd >= 10.0, fmt("%.0f / %.0f = %.2f, need >= 10", ld, bd, ld / bd)};
  });

  criterion(4, "full-GPU scenario (table2-full-gpu)", 5, [&] {
    const auto r = run_named_scenario("table2-full-gpu", cfg, opts);
    const auto& full = run_labeled(r, "table2-full-gpu");
    const double trig_full = full.at(Model::lk, Phase::trigger).avg;
    const double trig_single = single_stats().at(Model::lk, Phase::trigger).avg;
    const double rel = std::fabs(trig_full - trig_single) / trig_single;
    const ComparisonReport c = compare(full, full);
    const bool ok = !r.failure && rel <= 0.25 && c.passed();
    return Outcome{ok, fmt("trigger %.1f vs single-SM %.1f (%.1f%%)", trig_full, trig_single, 100 * rel) +
                           fmt(", spawn ratio %.2f, wait delta %.4f, dispose ratio %.2f", c.trigger_ratio,
                               c.wait_delta, c.dispose_ratio)};
  });

  criterion(5, "worst-case spread (table3-worst)", 5, [&] {
    const auto r = run_named_scenario("table3-worst", cfg, opts);
    const auto& st = r.runs.front().stats;
    const auto& trig = st.at(Model::lk, Phase::trigger);
    const auto& spawn = st.at(Model::baseline, Phase::launch);
    const double a = static_cast<double>(trig.worst) / trig.avg;
    const double b = static_cast<double>(spawn.worst) / spawn.avg;
    const bool ok = !r.failure && a >= 3.0 && a <= 6.5 && b >= 1.5 && b <= 3.0 && ordered(st);
    return Outcome{ok, fmt("trigger worst/avg %.2f in [3, 6.5], spawn worst/avg %.2f in [1.5, 3]", a, b) +
                           (ordered(st) ? ", min <= avg <= worst in every row" : ", row ordering broken")};
  });

  criterion(6, "pathology regression", 1, [&] {
    bool ok = true;
    for (int i = 0; i < 3; ++i) {
      const auto r = run_named_scenario("pathology", cfg, opts);
      ok = ok && r.pathology && r.pathology->hangs_without_workaround && r.pathology->completes_with_workaround;
    }
    return Outcome{ok, "hangs_without_workaround = true, completes_with_workaround = true, 3 runs"};
  });

  criterion(7, "protocol properties", 30, [&] {
    for (std::uint32_t slot = 0; slot < 256; ++slot) {
      const auto w = protocol::encode_to_gpu(protocol::HostCommand::work(slot));
      const auto back = protocol::decode_to_gpu(w);
      if (back.kind != protocol::HostCommand::Kind::work || back.slot != slot) {
        return Outcome{false, "round trip broke at slot " + std::to_string(slot)};
      }
    }
    std::mt19937_64 rng(2026);
    for (int i = 0; i < 1000; ++i) {
      if (auto err = random_sim_program(rng, cfg); !err.empty()) {
        return Outcome{false, "scenario " + std::to_string(i) + ": " + err};
      }
    }
    return Outcome{true, "slots 0..255 round trip; 1000 random scenarios valid, exactly-once, "
                         "injected words detected"};
  });

  criterion(8, "native stress", 60, [&] {
    Config c = cfg;
    c.native.num_workers = 4;
    Scenario s = Scenario::from_config(c);
    s.name = "native-stress";
    s.backend = Backend::native;
    s.scope = Scope::full_gpu;
    s.reps = 10'000;
    s.work = WorkDescriptor::busy_loop(1'000);
    s.payload_bytes = 256;
    const RunResult r = run_scenario(c, s);
    if (r.failure) {
      return Outcome{false, "run failed: " + r.failure->what};
    }
    if (auto v = protocol::validate_trace(r.trace)) {
      return Outcome{false, "protocol violation: " + v->reason};
    }
    if (auto m = check_exactly_once(r.trace, r.dispatches)) {
      return Outcome{false, "lost or repeated dispatch: " + *m};
    }
    if (r.dispatches.size() != 4 * 10'000) {
      return Outcome{false, std::to_string(r.dispatches.size()) + " dispatches, expected 40000"};
    }
    const double trig = r.stats.at(Model::lk, Phase::trigger).median;
    const double spawn = r.stats.at(Model::baseline, Phase::launch).median;
    return Outcome{trig < spawn, fmt("40000 dispatches, 0 violations; median trigger %.0f ns vs spawn %.0f ns",
                                     trig, spawn)};
  });

  criterion(9, "determinism", 0, [&] {
    for (const auto& name : scenario_names()) {
      for (std::uint64_t seed : {std::uint64_t{1}, std::uint64_t{42}}) {
        RunOptions o;
        o.seed = seed;
        const auto a = run_named_scenario(name, cfg, o);
        const auto b = run_named_scenario(name, cfg, o);
        if (format_report_csv(a) != format_report_csv(b)) {
          return Outcome{false, name + " seed " + std::to_string(seed) + " differs"};
        }
      }
    }
    return Outcome{true, "4 scenarios x 2 seeds, byte-identical CSV"};
  });

  return failures == 0 ? 0 : 1;
}
