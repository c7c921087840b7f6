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

#include "persistkern/bench.hpp"

#include "persistkern/error.hpp"
#include "persistkern/native_executor.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>

namespace pk {

std::string_view to_string(Backend b) noexcept { return b == Backend::sim ? "sim" : "native"; }
std::string_view to_string(Scope s) noexcept { return s == Scope::single_sm ? "single-sm" : "full-gpu"; }

Backend parse_backend(std::string_view text) {
  if (text == "sim") {
    return Backend::sim;
  }
  if (text == "native") {
    return Backend::native;
  }
  throw Error(ErrorCode::invalid_argument, "unknown backend '" + std::string(text) + "' (sim|native)");
}

Scenario Scenario::from_config(const Config& cfg) {
  Scenario s;
  s.reps = cfg.bench.reps;
  s.work = WorkDescriptor::busy_loop(cfg.bench.iterations);
  s.payload_bytes = cfg.bench.payload_bytes;
  return s;
}

PhaseStats summarize(Model model, Phase phase, std::vector<std::uint64_t> samples) {
  if (samples.empty()) {
    throw Error(ErrorCode::invalid_argument, "no samples to summarize");
  }
  PhaseStats st;
  st.model = model;
  st.phase = phase;
  st.reps = static_cast<std::uint32_t>(samples.size());
  std::sort(samples.begin(), samples.end());
  st.min = samples.front();
  st.worst = samples.back();
  const double n = static_cast<double>(samples.size());
  // Sum in integers so the mean does not depend on summation order.
  unsigned __int128 sum = 0;
  for (auto v : samples) {
    sum += v;
  }
  st.avg = static_cast<double>(sum) / n;
  double sq = 0;
  for (auto v : samples) {
    const double d = static_cast<double>(v) - st.avg;
    sq += d * d;
  }
  st.stddev = std::sqrt(sq / n);
  const std::size_t mid = samples.size() / 2;
  st.median = samples.size() % 2 == 1 ? static_cast<double>(samples[mid])
                                      : (static_cast<double>(samples[mid - 1]) + static_cast<double>(samples[mid])) / 2;
  // Guard the invariant against floating-point rounding of the mean.
  st.avg = std::clamp(st.avg, static_cast<double>(st.min), static_cast<double>(st.worst));
  return st;
}

const PhaseStats* RunStats::find(Model model, Phase phase) const {
  for (const auto& r : rows) {
    if (r.model == model && r.phase == phase) {
      return &r;
    }
  }
  return nullptr;
}

const PhaseStats& RunStats::at(Model model, Phase phase) const {
  if (const auto* r = find(model, phase)) {
    return *r;
  }
  throw Error(ErrorCode::comparison,
              "no " + std::string(to_string(model)) + " " + std::string(to_string(phase)) + " row");
}

namespace {

std::unique_ptr<Executor> make_executor(const Config& cfg, const Scenario& s, std::uint64_t seed) {
  if (s.backend == Backend::native) {
    return std::make_unique<NativeExecutor>(cfg.native);
  }
  SimParams p = cfg.sim;
  p.seed = seed;
  if (!s.jitter) {
    p.jitter = {};
  }
  if (s.workaround) {
    p.calibration.workaround_full_board = *s.workaround;
  }
  if (s.deferral) {
    p.link.deferral = *s.deferral;
  }
  return std::make_unique<SimExecutor>(p);
}

// Separate streams for the two models, so adding baseline reps never shifts
// the LK samples.
std::uint64_t baseline_seed(std::uint64_t seed) { return seed ^ 0x9e3779b97f4a7c15ULL; }

class Recorder {
public:
  Recorder(Model model, const Scenario& s, RunResult& out) : model_(model), s_(s), out_(out) {}

  template <typename F>
  void step(Phase phase, std::uint32_t rep, const char* tag, F&& f) {
    phase_ = phase;
    rep_ = rep;
    const PhaseTiming t = f();
    samples_[phase].push_back(t.ticks);
    out_.phase_rows.push_back({s_.name + "/" + (tag ? std::string(tag) : std::to_string(rep)), model_, t});
  }

  void fail(const Error& e) {
    if (!out_.failure) {
      out_.failure = RunFailure{model_, phase_, rep_, e.code(), e.what()};
    }
  }

  void flush(std::initializer_list<Phase> order) {
    for (Phase p : order) {
      if (auto it = samples_.find(p); it != samples_.end() && !it->second.empty()) {
        out_.stats.rows.push_back(summarize(model_, p, it->second));
      }
    }
  }

private:
  Model model_;
  const Scenario& s_;
  RunResult& out_;
  Phase phase_ = Phase::init;
  std::uint32_t rep_ = 0;
  std::map<Phase, std::vector<std::uint64_t>> samples_;
};

SmMask scenario_mask(Scope scope, std::uint32_t n) {
  return scope == Scope::single_sm ? SmMask::single(0) : SmMask::all(n);
}

} // namespace

RunResult run_scenario(const Config& cfg, const Scenario& s) {
  if (s.reps < 1) {
    throw Error(ErrorCode::invalid_argument, "scenario reps must be at least 1");
  }
  cfg.validate();
  RunResult out;
  out.stats.backend = s.backend;
  out.stats.scope = s.scope;
  out.stats.reps = s.reps;
  out.stats.unit = s.backend == Backend::sim ? TimeUnit::cycles : TimeUnit::nanoseconds;

  if (s.model != ModelSel::baseline) {
    auto exec = make_executor(cfg, s, s.seed);
    const SmMask mask = scenario_mask(s.scope, exec->num_sms());
    LkSession lk(*exec);
    Recorder rec(Model::lk, s, out);
    try {
      rec.step(Phase::init, 0, "init", [&] { return lk.init(); });
      for (std::uint32_t r = 0; r < s.reps; ++r) {
        rec.step(Phase::copyin, r, nullptr, [&] { return lk.copyin(s.payload_bytes); });
        rec.step(Phase::trigger, r, nullptr, [&] { return lk.trigger(mask, s.work); });
        rec.step(Phase::wait, r, nullptr, [&] { return lk.wait(mask); });
        rec.step(Phase::copyout, r, nullptr, [&] { return lk.copyout(s.payload_bytes); });
      }
      rec.step(Phase::dispose, 0, "dispose", [&] { return lk.dispose(); });
    } catch (const Error& e) {
      rec.fail(e);
    }
    rec.flush({Phase::init, Phase::copyin, Phase::trigger, Phase::wait, Phase::copyout, Phase::dispose});
    out.trace = exec->trace();
    out.dispatches = exec->dispatches();
    if (auto* native = dynamic_cast<NativeExecutor*>(exec.get())) {
      out.pin_warning = native->pin_warning();
    }
  }

  if (s.model != ModelSel::lk) {
    auto exec = make_executor(cfg, s, baseline_seed(s.seed));
    const SmMask mask = scenario_mask(s.scope, exec->num_sms());
    BaselineSession base(*exec);
    Recorder rec(Model::baseline, s, out);
    try {
      rec.step(Phase::alloc, 0, "alloc", [&] { return base.alloc(); });
      for (std::uint32_t r = 0; r < s.reps; ++r) {
        rec.step(Phase::copyin, r, nullptr, [&] { return base.copyin(s.payload_bytes); });
        rec.step(Phase::launch, r, nullptr, [&] { return base.launch(mask, s.work); });
        rec.step(Phase::wait, r, nullptr, [&] { return base.wait(); });
        rec.step(Phase::copyout, r, nullptr, [&] { return base.copyout(s.payload_bytes); });
      }
      rec.step(Phase::dispose, 0, "dispose", [&] { return base.dispose(); });
    } catch (const Error& e) {
      rec.fail(e);
    }
    rec.flush({Phase::alloc, Phase::copyin, Phase::launch, Phase::wait, Phase::copyout, Phase::dispose});
  }
  return out;
}

ComparisonReport compare(const RunStats& lk, const RunStats& base) {
  if (lk.backend != base.backend || lk.scope != base.scope || lk.reps != base.reps || lk.unit != base.unit) {
    throw Error(ErrorCode::comparison, "cannot compare runs of different scenario shapes");
  }
  const auto& trig = lk.at(Model::lk, Phase::trigger);
  const auto& spawn = base.at(Model::baseline, Phase::launch);
  const auto& lw = lk.at(Model::lk, Phase::wait);
  const auto& bw = base.at(Model::baseline, Phase::wait);
  const auto& ld = lk.at(Model::lk, Phase::dispose);
  const auto& bd = base.at(Model::baseline, Phase::dispose);
  if (trig.avg <= 0 || bw.avg <= 0 || bd.avg <= 0) {
    throw Error(ErrorCode::comparison, "zero denominator in comparison");
  }
  ComparisonReport c;
  c.trigger_ratio = spawn.avg / trig.avg;
  c.wait_delta = std::fabs(lw.avg - bw.avg) / bw.avg;
  c.dispose_ratio = ld.avg / bd.avg;
  c.trigger_ok = c.trigger_ratio >= kMinTriggerRatio;
  c.wait_ok = c.wait_delta <= kMaxWaitDelta;
  c.dispose_ok = c.dispose_ratio >= kMinDisposeRatio;
  return c;
}

PathologyReport pathology_scenario(const Config& cfg, Scope scope, DeferralPolicy policy, std::uint64_t seed) {
  PathologyReport rep;
  for (const bool workaround : {false, true}) {
    Scenario s;
    s.name = "pathology";
    s.model = ModelSel::lk;
    s.scope = scope;
    s.reps = 1;
    s.work = WorkDescriptor::busy_loop(cfg.bench.iterations);
    s.payload_bytes = 0;
    s.seed = seed;
    s.workaround = workaround;
    s.deferral = policy;
    auto exec = make_executor(cfg, s, seed);
    LkSession lk(*exec);
    const SmMask mask = scenario_mask(scope, exec->num_sms());
    bool hung = false;
    try {
      lk.init();
      lk.trigger(mask, s.work);
      lk.wait(mask);
      lk.dispose();
    } catch (const HangDetected& e) {
      hung = true;
      if (!workaround) {
        rep.hang_message = e.what();
      }
    }
    if (workaround) {
      rep.completes_with_workaround = !hung;
    } else {
      rep.hangs_without_workaround = hung;
    }
  }
  return rep;
}

std::optional<std::string> check_exactly_once(const std::vector<protocol::TraceRecord>& trace,
                                              const std::vector<Dispatch>& dispatches) {
  std::map<std::uint32_t, std::vector<std::uint32_t>> posted;
  for (const auto& r : trace) {
    if (r.side == protocol::Side::host && r.word >= protocol::kThreadWorkBase) {
      posted[r.sm].push_back(r.word - protocol::kThreadWorkBase);
    }
  }
  std::map<std::uint32_t, std::vector<std::uint32_t>> ran;
  for (const auto& d : dispatches) {
    ran[d.sm].push_back(d.slot);
  }
  for (const auto& [sm, slots] : posted) {
    const auto& got = ran[sm];
    if (got.size() != slots.size()) {
      return "SM " + std::to_string(sm) + ": " + std::to_string(slots.size()) + " work posts but " +
             std::to_string(got.size()) + " dispatches";
    }
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (slots[i] != got[i]) {
        return "SM " + std::to_string(sm) + ": post " + std::to_string(i) + " was slot " + std::to_string(slots[i]) +
               " but slot " + std::to_string(got[i]) + " ran";
      }
    }
  }
  for (const auto& [sm, got] : ran) {
    if (!got.empty() && posted.find(sm) == posted.end()) {
      return "SM " + std::to_string(sm) + " dispatched work that was never posted";
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

bool ScenarioReport::passed() const {
  return !failure && std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names = {"table2-single-sm", "table2-full-gpu", "table3-worst", "pathology"};
  return names;
}

namespace {

std::string fixed(double v, int precision) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, precision);
  return std::string(buf, p);
}

void add_check(ScenarioReport& r, std::string name, bool ok, std::string detail) {
  r.checks.push_back({std::move(name), ok, std::move(detail)});
}

void check_ordering(ScenarioReport& r, const RunStats& st, const std::string& label) {
  bool ok = !st.rows.empty();
  std::string detail = "all rows";
  for (const auto& row : st.rows) {
    if (!(static_cast<double>(row.min) <= row.avg && row.avg <= static_cast<double>(row.worst))) {
      ok = false;
      detail = std::string(to_string(row.model)) + " " + std::string(to_string(row.phase));
      break;
    }
  }
  add_check(r, label + " min <= avg <= worst", ok, detail);
}

void check_no_failure(ScenarioReport& r, const RunResult& run, const std::string& label) {
  if (run.failure) {
    const auto& f = *run.failure;
    add_check(r, label + " completes", false,
              std::string(to_string(f.model)) + " " + std::string(to_string(f.phase)) + " rep " +
                  std::to_string(f.rep) + ": " + f.what);
    if (!r.failure) {
      r.failure = f;
    }
  } else {
    add_check(r, label + " completes", true, "no hang");
  }
}

void sim_comparison_checks(ScenarioReport& r, const RunStats& st) {
  try {
    const auto c = compare(st, st);
    r.comparison = c;
    add_check(r, "trigger_ratio >= 10", c.trigger_ok, fixed(c.trigger_ratio, 2));
    add_check(r, "wait_delta <= 0.15", c.wait_ok, fixed(c.wait_delta, 4));
    add_check(r, "dispose_ratio >= 10", c.dispose_ok, fixed(c.dispose_ratio, 2));
  } catch (const Error& e) {
    add_check(r, "comparison", false, e.what());
  }
}

void native_checks(ScenarioReport& r, const RunResult& run) {
  const auto violation = protocol::validate_trace(run.trace);
  add_check(r, "trace validates", !violation, violation ? violation->reason : "ok");
  const auto eo = check_exactly_once(run.trace, run.dispatches);
  add_check(r, "exactly-once dispatch", !eo, eo ? *eo : "ok");
  const auto* trig = run.stats.find(Model::lk, Phase::trigger);
  const auto* spawn = run.stats.find(Model::baseline, Phase::launch);
  if (trig && spawn) {
    add_check(r, "median trigger < median spawn", trig->median < spawn->median,
              fixed(trig->median, 0) + " ns vs " + fixed(spawn->median, 0) + " ns");
  } else {
    add_check(r, "median trigger < median spawn", false, "missing rows");
  }
  if (run.pin_warning) {
    r.notes.push_back("warning: " + *run.pin_warning);
  }
}

void append_rows(ScenarioReport& r, const std::string& label, RunResult&& run, bool keep_trace) {
  for (auto& row : run.phase_rows) {
    r.phase_rows.push_back(std::move(row));
  }
  if (keep_trace) {
    r.trace = std::move(run.trace);
  }
  r.runs.push_back({label, std::move(run.stats)});
}

} // namespace

ScenarioReport run_named_scenario(const std::string& name, const Config& cfg, const RunOptions& opts) {
  const auto& names = scenario_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    std::string known;
    for (const auto& n : names) {
      known += (known.empty() ? "" : ", ") + n;
    }
    throw Error(ErrorCode::unknown_scenario, "unknown scenario '" + name + "' (known: " + known + ")");
  }
  cfg.validate();
  ScenarioReport r;
  r.scenario = name;
  r.backend = opts.backend;
  r.seed = opts.seed;
  r.config_hash = hash_hex(config_hash(cfg));
  const bool sim = opts.backend == Backend::sim;

  Scenario s = Scenario::from_config(cfg);
  s.name = name;
  s.backend = opts.backend;
  s.seed = opts.seed;
  s.workaround = opts.workaround;
  if (!sim) {
    r.notes.push_back("native backend: wall-clock nanoseconds on this machine; hardware anchors do not apply");
  }

  if (name == "pathology") {
    if (!sim) {
      throw Error(ErrorCode::invalid_argument, "the pathology scenario needs the sim backend");
    }
    const auto p = pathology_scenario(cfg, Scope::single_sm, cfg.sim.link.deferral, opts.seed);
    r.pathology = p;
    add_check(r, "hangs_without_workaround", p.hangs_without_workaround,
              p.hangs_without_workaround ? p.hang_message : "completed");
    add_check(r, "completes_with_workaround", p.completes_with_workaround,
              p.completes_with_workaround ? "completed" : "hung");
    r.notes.push_back("single-SM trigger with link.deferral=" + cfg.sim.link.deferral.to_string());
    return r;
  }

  if (name == "table2-single-sm" || name == "table3-worst") {
    s.scope = Scope::single_sm;
    auto run = run_scenario(cfg, s);
    check_no_failure(r, run, name);
    check_ordering(r, run.stats, name);
    if (sim && name == "table2-single-sm") {
      sim_comparison_checks(r, run.stats);
    }
    if (sim && name == "table3-worst") {
      r.notes.push_back("worst-case spreads come from the synthetic jitter calibration, not from hardware");
      r.notes.push_back("full-GPU worst-case thresholds would be copied from single-SM (extrapolated)");
      const auto* trig = run.stats.find(Model::lk, Phase::trigger);
      const auto* spawn = run.stats.find(Model::baseline, Phase::launch);
      if (trig && spawn) {
        const double tr = static_cast<double>(trig->worst) / trig->avg;
        const double sr = static_cast<double>(spawn->worst) / spawn->avg;
        add_check(r, "LK trigger worst/avg in [3.0, 6.5]", tr >= 3.0 && tr <= 6.5, fixed(tr, 2));
        add_check(r, "spawn worst/avg in [1.5, 3.0]", sr >= 1.5 && sr <= 3.0, fixed(sr, 2));
      } else {
        add_check(r, "worst/avg rows present", false, "missing rows");
      }
    }
    if (!sim) {
      native_checks(r, run);
    }
    append_rows(r, name, std::move(run), true);
    return r;
  }

  // table2-full-gpu
  s.scope = Scope::full_gpu;
  auto full = run_scenario(cfg, s);
  Scenario ref = s;
  ref.scope = Scope::single_sm;
  ref.model = ModelSel::lk;
  auto single = run_scenario(cfg, ref);
  check_no_failure(r, full, name);
  check_no_failure(r, single, name + " single-SM reference");
  check_ordering(r, full.stats, name);
  if (sim) {
    sim_comparison_checks(r, full.stats);
    const auto* f = full.stats.find(Model::lk, Phase::trigger);
    const auto* one = single.stats.find(Model::lk, Phase::trigger);
    if (f && one) {
      const double rel = f->avg / one->avg;
      add_check(r, "full-GPU LK trigger within 25% of single-SM", rel >= 0.75 && rel <= 1.25,
                fixed(f->avg, 1) + " vs " + fixed(one->avg, 1));
    } else {
      add_check(r, "full-GPU LK trigger within 25% of single-SM", false, "missing rows");
    }
  } else {
    native_checks(r, full);
  }
  append_rows(r, name, std::move(full), true);
  append_rows(r, name + "/single-sm-ref", std::move(single), false);
  return r;
}

// ---------------------------------------------------------------------------

std::string human_count(double v) {
  auto scaled = [](double x, const char* suffix) {
    const double one = std::round(x * 10) / 10;
    if (one < 10) {
      return fixed(one, 1) + suffix;
    }
    return fixed(std::round(x), 0) + suffix;
  };
  if (v < 999.5) {
    return fixed(std::round(v), 0);
  }
  if (v < 999'500) {
    return scaled(v / 1e3, "k");
  }
  return scaled(v / 1e6, "M");
}

std::string format_report_csv(const ScenarioReport& r) {
  std::string out;
  out += "# scenario=" + r.scenario + "\n";
  out += "# backend=" + std::string(to_string(r.backend)) + "\n";
  out += "# config_hash=" + r.config_hash + "\n";
  out += "# seed=" + std::to_string(r.seed) + "\n";
  if (!r.runs.empty()) {
    out += "# unit=" + std::string(to_string(r.runs.front().stats.unit)) + "\n";
  }
  for (const auto& n : r.notes) {
    out += "# note: " + n + "\n";
  }
  if (r.pathology) {
    out += std::string("# hangs_without_workaround=") + (r.pathology->hangs_without_workaround ? "true" : "false") +
           "\n";
    out += std::string("# completes_with_workaround=") +
           (r.pathology->completes_with_workaround ? "true" : "false") + "\n";
  }
  for (const auto& c : r.checks) {
    out += std::string("# check ") + (c.passed ? "PASS " : "FAIL ") + c.name + "\n";
  }
  out += "scenario,model,phase,avg,worst,min,stddev,reps\n";
  for (const auto& run : r.runs) {
    for (const auto& row : run.stats.rows) {
      out += run.label + ',' + std::string(to_string(row.model)) + ',' + std::string(to_string(row.phase)) + ',' +
             fixed(row.avg, 2) + ',' + std::to_string(row.worst) + ',' + std::to_string(row.min) + ',' +
             fixed(row.stddev, 2) + ',' + std::to_string(row.reps) + '\n';
    }
  }
  return out;
}

namespace {

struct RowPair {
  const char* label;
  Phase lk;
  Phase base;
};

constexpr RowPair kPairs[] = {
    {"Init/Alloc", Phase::init, Phase::alloc},  {"Copyin", Phase::copyin, Phase::copyin},
    {"Trigger/Spawn", Phase::trigger, Phase::launch}, {"Wait", Phase::wait, Phase::wait},
    {"Copyout", Phase::copyout, Phase::copyout}, {"Dispose", Phase::dispose, Phase::dispose},
};

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) {
    s.append(width - s.size(), ' ');
  }
  return s;
}

void render_block(std::string& out, const RunStats& st, bool worst) {
  out += worst ? "  Worst values\n" : "  Average values\n";
  out += "  " + pad("", 16) + pad("LK", 10) + "BASE\n";
  for (const auto& p : kPairs) {
    const auto* a = st.find(Model::lk, p.lk);
    const auto* b = st.find(Model::baseline, p.base);
    if (!a && !b) {
      continue;
    }
    auto cell = [&](const PhaseStats* s) {
      if (!s) {
        return std::string("-");
      }
      return human_count(worst ? static_cast<double>(s->worst) : s->avg);
    };
    out += "  " + pad(p.label, 16) + pad(cell(a), 10) + cell(b) + "\n";
  }
}

} // namespace

std::string format_report_table(const ScenarioReport& r) {
  std::string out;
  out += "scenario " + r.scenario + "  backend " + std::string(to_string(r.backend)) + "  seed " +
         std::to_string(r.seed) + "  config " + r.config_hash + "\n";
  for (const auto& run : r.runs) {
    out += "\n" + run.label + " (" + std::string(to_string(run.stats.scope)) + ", " + std::to_string(run.stats.reps) +
           " reps, " + std::string(to_string(run.stats.unit)) + ")\n";
    render_block(out, run.stats, false);
    render_block(out, run.stats, true);
  }
  if (r.comparison) {
    out += "\ntrigger_ratio " + fixed(r.comparison->trigger_ratio, 2) + "  wait_delta " +
           fixed(r.comparison->wait_delta, 4) + "  dispose_ratio " + fixed(r.comparison->dispose_ratio, 2) + "\n";
  }
  if (r.pathology) {
    out += std::string("\nhangs_without_workaround ") + (r.pathology->hangs_without_workaround ? "true" : "false") +
           "\ncompletes_with_workaround " + (r.pathology->completes_with_workaround ? "true" : "false") + "\n";
  }
  if (!r.notes.empty()) {
    out += "\n";
    for (const auto& n : r.notes) {
      out += "note: " + n + "\n";
    }
  }
  out += "\n";
  for (const auto& c : r.checks) {
    out += std::string(c.passed ? "PASS " : "FAIL ") + c.name + " (" + c.detail + ")\n";
  }
  out += r.passed() ? "result: PASS\n" : "result: FAIL\n";
  return out;
}

std::string calibration_report(const Config& cfg) {
  struct Anchor {
    const char* label;
    Model model;
    Phase phase;
    double single_sm;
    double full_gpu;
  };
  static const Anchor anchors[] = {
      {"LK Init", Model::lk, Phase::init, 509e6, 503e6},
      {"LK Trigger", Model::lk, Phase::trigger, 239, 210},
      {"LK Wait", Model::lk, Phase::wait, 190e3, 190e3},
      {"LK Dispose", Model::lk, Phase::dispose, 30e6, 30e6},
      {"BASE Alloc", Model::baseline, Phase::alloc, 496e6, 497e6},
      {"BASE Spawn", Model::baseline, Phase::launch, 3.9e3, 3.8e3},
      {"BASE Wait", Model::baseline, Phase::wait, 175e3, 176e3},
      {"BASE Dispose", Model::baseline, Phase::dispose, 274e3, 247e3},
  };
  Scenario s = Scenario::from_config(cfg);
  s.name = "calibration";
  const auto single = run_scenario(cfg, s);
  s.scope = Scope::full_gpu;
  const auto full = run_scenario(cfg, s);

  std::string out = "calibration " + hash_hex(config_hash(cfg)) + "\n\n";
  out += "reference averages (cycles) vs model, seed " + std::to_string(s.seed) + ", " + std::to_string(s.reps) + " reps\n";
  out += "  " + pad("", 14) + pad("single-SM", 12) + pad("model", 10) + pad("full-GPU", 12) + "model\n";
  auto model_value = [](const RunResult& run, const Anchor& a) {
    const auto* row = run.stats.find(a.model, a.phase);
    return row ? human_count(row->avg) : std::string("-");
  };
  for (const auto& a : anchors) {
    out += "  " + pad(a.label, 14) + pad(human_count(a.single_sm), 12) + pad(model_value(single, a), 10) +
           pad(human_count(a.full_gpu), 12) + model_value(full, a) + "\n";
  }
  if (single.failure || full.failure) {
    const auto& f = single.failure ? *single.failure : *full.failure;
    out += "  (run stopped: " + f.what + ")\n";
  }
  out += "\nconstants\n";
  const std::string text = canonical_text(cfg);
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    out += "  " + text.substr(pos, nl - pos) + "\n";
    pos = nl + 1;
  }
  return out;
}

} // namespace pk
