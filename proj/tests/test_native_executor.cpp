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
#include "persistkern/host_api.hpp"
#include "persistkern/native_executor.hpp"

using namespace pk;

namespace {

NativeConfig small(std::uint32_t workers) {
  NativeConfig c;
  c.num_workers = workers;
  c.timeout_ms = 5000;
  return c;
}

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::internal;
}

} // namespace

TEST_CASE("boot leaves every worker idle") {
  NativeExecutor ex(small(4));
  CHECK(ex.unit() == TimeUnit::nanoseconds);
  ex.lk_boot();
  for (std::uint32_t w : ex.from_gpu_snapshot()) {
    CHECK(w == protocol::kThreadNop);
  }
  CHECK(ex.exited_workers() == 0);
  ex.lk_shutdown();
  CHECK(ex.exited_workers() == 4);
  CHECK_FALSE(protocol::validate_trace(ex.trace()).has_value());
}

TEST_CASE("trigger and wait round trips") {
  for (std::uint32_t n : {1u, 4u}) {
    CAPTURE(n);
    NativeExecutor ex(small(n));
    LkSession lk(ex);
    lk.init();
    for (std::uint32_t i = 0; i < 50; ++i) {
      const SmMask m = SmMask::single(i % n);
      lk.trigger(m, WorkDescriptor::busy_loop(i % 3 == 0 ? 0 : 200, i % 7));
      lk.wait(m);
    }
    lk.trigger(SmMask::all(n), WorkDescriptor::busy_loop(1000, 9));
    lk.wait(SmMask::all(n));
    lk.dispose();

    const auto trace = ex.trace();
    const auto v = protocol::validate_trace(trace);
    CHECK_MESSAGE(!v.has_value(), (v ? v->reason : ""));
    for (std::size_t i = 1; i < trace.size(); ++i) {
      CHECK(trace[i].step > trace[i - 1].step);
    }
    CHECK(ex.dispatches().size() == 50 + n);
    CHECK_FALSE(check_exactly_once(trace, ex.dispatches()).has_value());
    CHECK(ex.exited_workers() == n);
  }
}

TEST_CASE("pure spin strategy works too") {
  NativeConfig c = small(2);
  c.spin_strategy = SpinStrategy::pure_spin;
  NativeExecutor ex(c);
  LkSession lk(ex);
  lk.init();
  lk.trigger(SmMask(0x3), WorkDescriptor::busy_loop(10));
  lk.wait(SmMask(0x3));
  lk.dispose();
  CHECK_FALSE(protocol::validate_trace(ex.trace()).has_value());
}

TEST_CASE("baseline spawns one thread per launch") {
  NativeExecutor ex(small(4));
  BaselineSession base(ex);
  base.alloc();
  for (int i = 0; i < 10; ++i) {
    base.launch(SmMask::all(4), WorkDescriptor::busy_loop(100));
    base.wait();
  }
  base.copyin(4096);
  base.dispose();
  CHECK(ex.dispatches().empty()); // only persistent workers log dispatches
  CHECK(ex.trace().empty());
}

TEST_CASE("errors") {
  NativeExecutor ex(small(2));
  CHECK(code_of([&] { ex.lk_post(SmMask::single(0), WorkDescriptor::busy_loop(1)); }) ==
        ErrorCode::invalid_argument);
  ex.lk_boot();
  CHECK(code_of([&] { ex.lk_post(SmMask::single(0), WorkDescriptor::busy_loop(1, kNativeSlots)); }) ==
        ErrorCode::invalid_argument);
  ex.lk_shutdown();
}

TEST_CASE("a worker that never finishes is reported as a hang") {
  NativeConfig c = small(1);
  c.timeout_ms = 50;
  c.ns_per_iteration = Ratio{1, 1};
  NativeExecutor ex(c);
  ex.lk_boot();
  ex.lk_post(SmMask::single(0), WorkDescriptor::busy_loop(500'000'000)); // about 0.5 s
  try {
    ex.lk_await(SmMask::single(0));
    FAIL("no hang");
  } catch (const HangDetected& e) {
    CHECK(e.sm() == 0);
  }
  // Destruction must still join the worker.
}

TEST_CASE("config checks") {
  NativeConfig c;
  CHECK_FALSE(c.check().has_value());
  c.num_workers = 0;
  CHECK(c.check().has_value());
  c = {};
  c.timeout_ms = 0;
  CHECK(c.check().has_value());
  CHECK(parse_spin_strategy("pure_spin") == SpinStrategy::pure_spin);
  CHECK(to_string(SpinStrategy::spin_then_yield) == "spin_then_yield");
  CHECK_THROWS_AS(parse_spin_strategy("sleep"), Error);
}
