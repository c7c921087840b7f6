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

#include "persistkern/error.hpp"
#include "persistkern/host_api.hpp"
#include "persistkern/sim_executor.hpp"

#include <random>

using namespace pk;

namespace {

// Default calibration without jitter. Expected costs below are worked out
// from the link formula and the calibration constants:
//   128-byte board sync: 80 + ceil(128 / (15/3.6 * (0.25 + 0.75*128/65536))) = 203
//   256-byte launch payload: 323, 64 KiB copy: 15809
SimParams quiet() { return SimParams{}; }

SimParams noisy(std::uint64_t seed) {
  SimParams p;
  p.seed = seed;
  p.jitter.link = {10, 40, 600, 900};
  p.jitter.runtime = {100, 100, 3000, 4000};
  return p;
}

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::internal;
}

} // namespace

TEST_CASE("LK phases without jitter, single SM") {
  SimExecutor sim(quiet());
  LkSession lk(sim);
  const SmMask sm0 = SmMask::single(0);

  // 16 host writes, boot constant, then workers publish INIT and NOP; the
  // NOP is visible 8 + 170000 cycles after boot and the 203-cycle readback
  // picks it up at the end of read 838.
  CHECK(lk.init().ticks == 16 + 508'830'000 + 838 * 203);
  CHECK(lk.copyin(65536).ticks == 15'809);
  CHECK(lk.trigger(sm0, WorkDescriptor::busy_loop(20'000)).ticks == 1 + 203);
  // poll 8 + work 20000 + flush 170000 = 190008 = 936 readbacks exactly
  CHECK(lk.wait(sm0).ticks == 190'008);
  CHECK(lk.copyout(65536).ticks == 15'809);
  // 16 writes + 203 sync + poll 8, then completion signal and teardown
  CHECK(lk.dispose().ticks == 16 + 203 + 8 + 155'000 + 29'840'000);

  const auto trace = sim.trace();
  CHECK_FALSE(protocol::validate_trace(trace).has_value());
  REQUIRE(sim.dispatches().size() == 1);
  CHECK(sim.dispatches()[0].sm == 0);
  CHECK(sim.dispatches()[0].slot == 0);
}

TEST_CASE("baseline phases without jitter") {
  SimExecutor sim(quiet());
  BaselineSession base(sim);
  CHECK(base.alloc().ticks == 496'000'000);
  CHECK(base.launch(SmMask::single(0), WorkDescriptor::busy_loop(20'000)).ticks == 3'200 + 323);
  CHECK(base.wait().ticks == 20'000 + 155'000);
  CHECK(base.dispose().ticks == 274'000);
}

TEST_CASE("repeated stages keep the same cost without jitter") {
  SimExecutor sim(quiet());
  LkSession lk(sim);
  lk.init();
  for (int i = 0; i < 20; ++i) {
    CHECK(lk.trigger(SmMask::single(0), WorkDescriptor::busy_loop(20'000)).ticks == 204);
    CHECK(lk.wait(SmMask::single(0)).ticks == 190'008);
  }
  lk.dispose();
  CHECK_FALSE(protocol::validate_trace(sim.trace()).has_value());
  CHECK(sim.dispatches().size() == 20);
}

TEST_CASE("same seed, same run") {
  auto run = [](std::uint64_t seed) {
    SimExecutor sim(noisy(seed));
    LkSession lk(sim);
    std::vector<std::uint64_t> ticks;
    ticks.push_back(lk.init().ticks);
    for (int i = 0; i < 30; ++i) {
      ticks.push_back(lk.trigger(SmMask::all(16), WorkDescriptor::busy_loop(1000 + i)).ticks);
      ticks.push_back(lk.wait(SmMask::all(16)).ticks);
    }
    ticks.push_back(lk.dispose().ticks);
    return std::pair{ticks, sim.trace()};
  };
  const auto a = run(7);
  const auto b = run(7);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  const auto c = run(8);
  CHECK(a.first != c.first);
}

TEST_CASE("jitter stays within its bound") {
  JitterConfig cfg;
  cfg.link = {10, 40, 600, 900};
  cfg.runtime = {100, 100, 3000, 4000};
  JitterModel j(3, cfg);
  Cycles max_link = 0;
  Cycles max_rt = 0;
  int spikes = 0;
  for (int i = 0; i < 20'000; ++i) {
    const Cycles l = j.sample(JitterSource::link);
    const Cycles r = j.sample(JitterSource::runtime);
    CHECK(l <= cfg.link.bound());
    CHECK(r <= cfg.runtime.bound());
    max_link = std::max(max_link, l);
    max_rt = std::max(max_rt, r);
    spikes += l >= 600;
  }
  CHECK(max_link >= 600);
  CHECK(max_rt >= 3000);
  // 4% spike rate; loose binomial bounds
  CHECK(spikes > 600);
  CHECK(spikes < 1000);

  JitterModel off(3, {});
  for (int i = 0; i < 100; ++i) {
    CHECK(off.sample(JitterSource::link) == 0);
  }
}

TEST_CASE("single-SM sync without the workaround hangs under indefinite deferral") {
  SimParams p = quiet();
  p.calibration.workaround_full_board = false;
  SimExecutor sim(p);
  LkSession lk(sim);
  // Init syncs the whole board, so it is not affected.
  lk.init();
  try {
    lk.trigger(SmMask::single(0), WorkDescriptor::busy_loop(100));
    FAIL("trigger completed");
  } catch (const HangDetected& e) {
    CHECK(e.code() == ErrorCode::hang);
    CHECK(e.sm() == 0);
    CHECK(std::string(e.what()).find("deferred") != std::string::npos);
  }
  // The device is unusable afterwards.
  CHECK(code_of([&] { sim.lk_await(SmMask::single(0)); }) == ErrorCode::hang);
}

TEST_CASE("finite deferral delays, does not hang") {
  SimParams p = quiet();
  p.calibration.workaround_full_board = false;
  p.link.deferral = DeferralPolicy::delay(1000);
  SimExecutor sim(p);
  LkSession lk(sim);
  lk.init();
  // 4-byte write: 80 + ceil(4 / (15/3.6 * 0.25004...)) = 84, plus the delay
  CHECK(lk.trigger(SmMask::single(0), WorkDescriptor::busy_loop(100)).ticks == 1 + 84 + 1000);
  lk.wait(SmMask::single(0));
  lk.dispose();
  CHECK_FALSE(protocol::validate_trace(sim.trace()).has_value());
}

TEST_CASE("boards below the threshold hang even with the workaround") {
  SimParams p = quiet();
  p.device.num_sms = 4; // 32-byte board
  SimExecutor sim(p);
  LkSession lk(sim);
  CHECK(code_of([&] { lk.init(); }) == ErrorCode::hang);
}

TEST_CASE("misplaced persistent block fails init") {
  SimExecutor sim(quiet());
  swap_block_assignment(sim.device_for_test(), 0, 1);
  LkSession lk(sim);
  CHECK(code_of([&] { lk.init(); }) == ErrorCode::init_failure);
}

TEST_CASE("illegal to_GPU word is caught by the worker") {
  SimExecutor sim(quiet());
  LkSession lk(sim);
  lk.init();
  try {
    sim.inject_to_gpu(3, 9);
    sim.drain();
    FAIL("no violation");
  } catch (const ProtocolViolation& e) {
    CHECK(e.raw_word() == 9);
  }
}

TEST_CASE("busy and ordering errors") {
  SimExecutor sim(quiet());
  CHECK(code_of([&] { sim.lk_post(SmMask::single(0), WorkDescriptor::busy_loop(1)); }) ==
        ErrorCode::invalid_argument);
  CHECK(code_of([&] { sim.base_launch(SmMask::single(0), WorkDescriptor::busy_loop(1)); }) ==
        ErrorCode::invalid_argument);
  sim.lk_boot();
  CHECK(code_of([&] { sim.lk_boot(); }) == ErrorCode::busy);
  sim.lk_post(SmMask::single(2), WorkDescriptor::busy_loop(1'000'000));
  // Let WORKING reach the host: 12 copies take well over the 170000-cycle flush.
  for (int i = 0; i < 12; ++i) {
    sim.copy(65536, Direction::host_to_device);
  }
  CHECK(code_of([&] { sim.lk_post(SmMask::single(2), WorkDescriptor::busy_loop(1)); }) == ErrorCode::busy);
  CHECK(code_of([&] { sim.lk_shutdown(); }) == ErrorCode::busy);
  sim.lk_await(SmMask::single(2));
  sim.lk_shutdown();
  CHECK_FALSE(protocol::validate_trace(sim.trace()).has_value());
}

TEST_CASE("run_until_quiescent") {
  using K = HostOp::Kind;
  const auto all = SmMask::all(16);
  const std::vector<HostOp> program = {
      {K::lk_init, {}, {}, 0},
      {K::lk_copyin, {}, {}, 4096},
      {K::lk_trigger, SmMask(0x00FF), WorkDescriptor::busy_loop(500), 0},
      {K::lk_trigger, SmMask(0xFF00), WorkDescriptor::busy_loop(900, 1), 0},
      {K::lk_wait, all, {}, 0},
      {K::lk_copyout, {}, {}, 4096},
      {K::lk_dispose, {}, {}, 0},
  };
  const SimTrace t = run_until_quiescent(quiet(), program);
  CHECK_FALSE(protocol::validate_trace(t.protocol).has_value());
  CHECK(t.dispatches.size() == 16);
  for (const auto& d : t.dispatches) {
    CHECK(d.slot == (d.sm < 8 ? 0u : 1u));
  }
  REQUIRE(t.final_states.size() == 16);
  for (const auto& s : t.final_states) {
    CHECK(s.phase == protocol::WorkerPhase::exited);
  }
  REQUIRE(t.timings.size() == program.size());
  for (std::size_t i = 1; i < t.timings.size(); ++i) {
    CHECK(t.timings[i].start >= t.timings[i - 1].end());
  }
  CHECK(t.final_cycle >= t.timings.back().end());

  const std::string csv = format_timings_csv(t.timings);
  CHECK(csv.rfind("phase,sm_mask,start_cycle,end_cycle\n", 0) == 0);
  CHECK(csv.find("\nTrigger,0xff,") != std::string::npos);
}

TEST_CASE("random programs always produce valid traces") {
  std::mt19937_64 rng(11);
  for (int round = 0; round < 200; ++round) {
    SimParams p = noisy(rng());
    // Boards below 8 SMs are smaller than the deferral threshold.
    p.device.num_sms = 8 + static_cast<std::uint32_t>(rng() % 9);
    const auto n = p.device.num_sms;
    SimExecutor sim(p);
    LkSession lk(sim);
    lk.init();
    std::uint64_t outstanding = 0;
    for (int op = 0; op < 12; ++op) {
      const std::uint64_t idle = ~outstanding & SmMask::all(n).bits();
      if (idle != 0 && rng() % 2 == 0) {
        std::uint64_t m = idle & rng();
        if (m == 0) {
          m = idle & (~idle + 1);
        }
        lk.trigger(SmMask(m), WorkDescriptor::busy_loop(rng() % 5000, static_cast<std::uint32_t>(op)));
        outstanding |= m;
      } else if (outstanding != 0) {
        lk.wait(SmMask(outstanding));
        outstanding = 0;
      }
    }
    if (outstanding != 0) {
      lk.wait(SmMask(outstanding));
    }
    lk.dispose();
    const auto v = protocol::validate_trace(sim.trace());
    CHECK_MESSAGE(!v.has_value(), "round " << round << ": " << (v ? v->reason : ""));
  }
}
