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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "persistkern/bench.hpp"
#include "persistkern/error.hpp"

#include <cmath>

using namespace pk;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::internal;
}

Scenario quiet_scenario(std::uint32_t reps) {
  Scenario s = Scenario::from_config(Config{});
  s.reps = reps;
  s.jitter = false;
  return s;
}

} // namespace

TEST_CASE("summarize") {
  const PhaseStats s = summarize(Model::lk, Phase::wait, {10, 1, 4, 3, 2});
  CHECK(s.avg == doctest::Approx(4.0));
  CHECK(s.min == 1);
  CHECK(s.worst == 10);
  CHECK(s.median == doctest::Approx(3.0));
  CHECK(s.stddev == doctest::Approx(std::sqrt(10.0))); // (9+4+1+0+36)/5
  CHECK(s.reps == 5);
  CHECK(summarize(Model::lk, Phase::wait, {4, 1, 3, 2}).median == doctest::Approx(2.5));
  const PhaseStats one = summarize(Model::baseline, Phase::alloc, {7});
  CHECK(one.avg == 7);
  CHECK(one.stddev == 0);
}

TEST_CASE("human_count") {
  CHECK(human_count(239) == "239");
  CHECK(human_count(999.4) == "999");
  CHECK(human_count(3880) == "3.9k");
  CHECK(human_count(15809) == "16k");
  CHECK(human_count(190000) == "190k");
  CHECK(human_count(29995236) == "30M");
  CHECK(human_count(509000130) == "509M");
  CHECK(human_count(2.5e6) == "2.5M");
}

TEST_CASE("run without jitter matches the hand-computed phase costs") {
  const RunResult r = run_scenario(Config{}, quiet_scenario(4));
  REQUIRE_FALSE(r.failure.has_value());
  const auto& st = r.stats;
  CHECK(st.reps == 4);
  CHECK(st.unit == TimeUnit::cycles);
  CHECK(st.rows.size() == 12);
  CHECK(st.at(Model::lk, Phase::trigger).avg == 204);
  CHECK(st.at(Model::lk, Phase::trigger).worst == 204);
  CHECK(st.at(Model::lk, Phase::wait).avg == 190'008);
  CHECK(st.at(Model::lk, Phase::copyin).avg == 15'809);
  CHECK(st.at(Model::lk, Phase::init).reps == 1);
  CHECK(st.at(Model::baseline, Phase::launch).avg == 3'523);
  CHECK(st.at(Model::baseline, Phase::wait).avg == 175'000);
  CHECK(st.at(Model::baseline, Phase::dispose).avg == 274'000);
  CHECK(st.find(Model::lk, Phase::launch) == nullptr);
  CHECK(code_of([&] { st.at(Model::baseline, Phase::trigger); }) == ErrorCode::comparison);

  CHECK_FALSE(protocol::validate_trace(r.trace).has_value());
  CHECK_FALSE(check_exactly_once(r.trace, r.dispatches).has_value());
  CHECK(r.dispatches.size() == 4);
  CHECK(r.phase_rows.size() == 2 * (2 + 4 * 4));

  const ComparisonReport c = compare(st, st);
  CHECK(c.trigger_ratio == doctest::Approx(3523.0 / 204.0));
  CHECK(c.wait_delta == doctest::Approx(15008.0 / 175000.0));
  CHECK(c.dispose_ratio == doctest::Approx(29'995'235.0 / 274'000.0));
  CHECK(c.passed());
}

TEST_CASE("compare rejects mismatched runs") {
  const RunResult a = run_scenario(Config{}, quiet_scenario(2));
  const RunResult b = run_scenario(Config{}, quiet_scenario(3));
  CHECK(code_of([&] { compare(a.stats, b.stats); }) == ErrorCode::comparison);
  Scenario full = quiet_scenario(2);
  full.scope = Scope::full_gpu;
  const RunResult f = run_scenario(Config{}, full);
  CHECK(code_of([&] { compare(a.stats, f.stats); }) == ErrorCode::comparison);
  Scenario lk_only = quiet_scenario(2);
  lk_only.model = ModelSel::lk;
  const RunResult l = run_scenario(Config{}, lk_only);
  CHECK(code_of([&] { compare(l.stats, l.stats); }) == ErrorCode::comparison);
}

TEST_CASE("threshold verdicts") {
  RunStats st;
  st.reps = 1;
  auto row = [](Model m, Phase p, double v) {
    PhaseStats s;
    s.model = m;
    s.phase = p;
    s.avg = v;
    s.reps = 1;
    return s;
  };
  st.rows = {row(Model::lk, Phase::trigger, 100), row(Model::lk, Phase::wait, 116),
             row(Model::lk, Phase::dispose, 999), row(Model::baseline, Phase::launch, 999),
             row(Model::baseline, Phase::wait, 100), row(Model::baseline, Phase::dispose, 100)};
  const ComparisonReport c = compare(st, st);
  CHECK_FALSE(c.trigger_ok); // 9.99
  CHECK_FALSE(c.wait_ok);    // 0.16
  CHECK_FALSE(c.dispose_ok); // 9.99
  st.rows[0].avg = 99.9;
  st.rows[1].avg = 115;
  st.rows[2].avg = 1000;
  const ComparisonReport d = compare(st, st);
  CHECK(d.trigger_ok);
  CHECK(d.wait_ok);
  CHECK(d.dispose_ok);
}

TEST_CASE("pathology") {
  const Config cfg;
  const auto base = pathology_scenario(cfg, Scope::single_sm, DeferralPolicy::indefinite(), 1);
  CHECK(base.hangs_without_workaround);
  CHECK(base.completes_with_workaround);
  CHECK(base.hang_message.find("hang detected") != std::string::npos);

  const auto none = pathology_scenario(cfg, Scope::single_sm, DeferralPolicy::none(), 1);
  CHECK_FALSE(none.hangs_without_workaround);
  CHECK(none.completes_with_workaround);

  const auto delayed = pathology_scenario(cfg, Scope::single_sm, DeferralPolicy::delay(5000), 1);
  CHECK_FALSE(delayed.hangs_without_workaround);

  // The full board is large enough to ship either way.
  const auto full = pathology_scenario(cfg, Scope::full_gpu, DeferralPolicy::indefinite(), 1);
  CHECK_FALSE(full.hangs_without_workaround);
  CHECK(full.completes_with_workaround);
}

TEST_CASE("a hanging run is reported, not thrown") {
  Scenario s = quiet_scenario(3);
  s.workaround = false;
  const RunResult r = run_scenario(Config{}, s);
  REQUIRE(r.failure.has_value());
  CHECK(r.failure->model == Model::lk);
  CHECK(r.failure->phase == Phase::trigger);
  CHECK(r.failure->rep == 0);
  CHECK(r.failure->code == ErrorCode::hang);
}

TEST_CASE("check_exactly_once") {
  using protocol::Side;
  const std::vector<protocol::TraceRecord> trace = {
      {0, Side::host, 0, 16}, {1, Side::host, 1, 17}, {2, Side::host, 0, 18}};
  CHECK_FALSE(check_exactly_once(trace, {{0, 0, 5}, {1, 1, 6}, {0, 2, 7}}).has_value());
  CHECK(check_exactly_once(trace, {{0, 0, 5}, {1, 1, 6}}).has_value());                         // lost
  CHECK(check_exactly_once(trace, {{0, 0, 5}, {1, 1, 6}, {0, 2, 7}, {0, 2, 8}}).has_value());   // twice
  CHECK(check_exactly_once(trace, {{0, 2, 5}, {1, 1, 6}, {0, 0, 7}}).has_value());              // reordered
  CHECK(check_exactly_once(trace, {{0, 0, 5}, {1, 1, 6}, {0, 2, 7}, {3, 0, 9}}).has_value());   // unposted
}

TEST_CASE("named scenarios") {
  const Config cfg;
  CHECK(scenario_names() ==
        std::vector<std::string>{"table2-single-sm", "table2-full-gpu", "table3-worst", "pathology"});
  CHECK(code_of([&] { run_named_scenario("table4", cfg, {}); }) == ErrorCode::unknown_scenario);
  RunOptions native;
  native.backend = Backend::native;
  CHECK(code_of([&] { run_named_scenario("pathology", cfg, native); }) == ErrorCode::invalid_argument);

  const ScenarioReport a = run_named_scenario("table2-single-sm", cfg, {});
  const ScenarioReport b = run_named_scenario("table2-single-sm", cfg, {});
  CHECK(a.passed());
  CHECK(format_report_csv(a) == format_report_csv(b));
  CHECK(format_report_table(a) == format_report_table(b));
  RunOptions other;
  other.seed = 2;
  CHECK(format_report_csv(run_named_scenario("table2-single-sm", cfg, other)) != format_report_csv(a));

  const std::string csv = format_report_csv(a);
  CHECK(csv.rfind("# scenario=table2-single-sm\n# backend=sim\n# config_hash=" + hash_hex(config_hash(cfg)) +
                      "\n# seed=1\n",
                  0) == 0);
  CHECK(csv.find("\nscenario,model,phase,avg,worst,min,stddev,reps\n") != std::string::npos);
  CHECK(csv.find("\ntable2-single-sm,LK,Wait,190008.00,190008,190008,0.00,100\n") != std::string::npos);

  RunOptions off;
  off.workaround = false;
  const ScenarioReport hung = run_named_scenario("table2-single-sm", cfg, off);
  CHECK_FALSE(hung.passed());
  REQUIRE(hung.failure.has_value());
  CHECK(hung.failure->code == ErrorCode::hang);
}

TEST_CASE("calibration report lists every key") {
  const std::string text = calibration_report(Config{});
  for (const auto& key : config_keys()) {
    CHECK_MESSAGE(text.find("  " + key + " = ") != std::string::npos, key);
  }
  CHECK(text.find("LK Trigger") != std::string::npos);
}
