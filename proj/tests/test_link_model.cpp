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
#include "persistkern/link_model.hpp"

using namespace pk;

namespace {

// Round numbers so expected costs can be worked out by hand.
LinkModel simple_link() {
  LinkModel l;
  l.base_latency_cycles = 10;
  l.peak_bytes_per_cycle = 2.0;
  l.ramp_floor = 0.5;
  l.saturation_bytes = 1000;
  l.small_transfer_threshold_bytes = 64;
  l.deferral = DeferralPolicy::none();
  return l;
}

} // namespace

TEST_CASE("transfer_cycles: hand-computed costs") {
  const LinkModel l = simple_link();
  CHECK(transfer_cycles(l, 0) == Cycles{10});
  CHECK(transfer_cycles(l, 100) == Cycles{101});   // f=0.55: 100/1.1 = 90.9 -> 91
  CHECK(transfer_cycles(l, 1000) == Cycles{510});  // f=1: 500
  CHECK(transfer_cycles(l, 2000) == Cycles{1010}); // saturated
}

TEST_CASE("transfer_cycles: default calibration") {
  const LinkModel l;
  // 80 + ceil(b / (15e9/3.6e9 * f(b))), f(b) = 0.25 + 0.75 * b / 65536
  CHECK(transfer_cycles(l, 128) == Cycles{203});
  CHECK(transfer_cycles(l, 256) == Cycles{323});
  CHECK(transfer_cycles(l, 65536) == Cycles{15809});
  CHECK_FALSE(transfer_cycles(l, 4).has_value()); // one word, indefinitely deferred
}

TEST_CASE("deferral policies apply only below the threshold") {
  LinkModel l = simple_link();
  l.deferral = DeferralPolicy::delay(500);
  CHECK(transfer_cycles(l, 4) == Cycles{10 + 4 + 500}); // f(4)=0.502: 4/1.004 -> 4
  CHECK(transfer_cycles(l, 64) == transfer_cycles(simple_link(), 64));
  l.deferral = DeferralPolicy::indefinite();
  CHECK_FALSE(transfer_cycles(l, 0).has_value());
  CHECK_FALSE(transfer_cycles(l, 63).has_value());
  CHECK(transfer_cycles(l, 64).has_value());
}

TEST_CASE("DeferralPolicy text form") {
  CHECK(DeferralPolicy::parse("none") == DeferralPolicy::none());
  CHECK(DeferralPolicy::parse("indefinite") == DeferralPolicy::indefinite());
  CHECK(DeferralPolicy::parse("delay:250") == DeferralPolicy::delay(250));
  CHECK(DeferralPolicy::delay(250).to_string() == "delay:250");
  for (const char* bad : {"", "later", "delay:", "delay:x", "delay:-3"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(DeferralPolicy::parse(bad), Error);
  }
}

TEST_CASE("ramp and monotonicity properties") {
  for (const LinkModel& l : {LinkModel{}, simple_link()}) {
    double prev_f = 0;
    Cycles prev_c = 0;
    LinkModel none = l;
    none.deferral = DeferralPolicy::none();
    for (std::uint64_t b = 0; b <= 3 * l.saturation_bytes; b += 1 + b / 50) {
      const double f = l.ramp(b);
      CHECK(f > 0);
      CHECK(f <= 1.0);
      CHECK(f >= prev_f);
      if (b >= l.saturation_bytes) {
        CHECK(f == 1.0);
      }
      prev_f = f;
      const Cycles c = *transfer_cycles(none, b);
      CHECK(c >= prev_c);
      prev_c = c;
      if (b > 0) {
        const double bw = static_cast<double>(b) / static_cast<double>(c - none.base_latency_cycles);
        CHECK(bw <= none.peak_bytes_per_cycle + 1e-9);
      }
    }
  }
}

TEST_CASE("mailbox_sync_cost") {
  const Device d = build_device(DeviceConfig{});
  const LinkModel l;
  CHECK(mailbox_sync_bytes(d, SyncScope::single_sm, false) == 4);
  CHECK(mailbox_sync_bytes(d, SyncScope::single_sm, true) == 128);
  CHECK(mailbox_sync_bytes(d, SyncScope::full_board, false) == 128);
  CHECK(mailbox_sync_cost(l, d, SyncScope::single_sm, true) == transfer_cycles(l, 128));
  CHECK(mailbox_sync_cost(l, d, SyncScope::full_board, false) == transfer_cycles(l, 128));
  CHECK_FALSE(mailbox_sync_cost(l, d, SyncScope::single_sm, false).has_value());

  LinkModel none = l;
  none.deferral = DeferralPolicy::none();
  CHECK(mailbox_sync_cost(none, d, SyncScope::single_sm, false) == transfer_cycles(none, 4));

  // Masks: whole board when every SM is selected, one word per SM otherwise.
  CHECK(mailbox_sync_bytes(d, SmMask::all(16), false) == 128);
  CHECK(mailbox_sync_bytes(d, SmMask(0x7), false) == 12);
  CHECK(mailbox_sync_bytes(d, SmMask(0x7), true) == 128);
}

TEST_CASE("workaround never defers a mailbox sync") {
  for (std::uint32_t n = 1; n <= 64; ++n) {
    DeviceConfig c;
    c.num_sms = n;
    const Device d = build_device(c);
    LinkModel l;
    l.small_transfer_threshold_bytes = 8; // the smallest board (1 SM) is 8 bytes
    CHECK(mailbox_sync_cost(l, d, SyncScope::single_sm, true).has_value());
  }
}

TEST_CASE("LinkModel::check") {
  LinkModel l;
  CHECK_FALSE(l.check().has_value());
  l.ramp_floor = 0;
  CHECK(l.check().has_value());
  l = {};
  l.peak_bytes_per_cycle = 0;
  CHECK(l.check().has_value());
  l = {};
  l.saturation_bytes = 0;
  CHECK(l.check().has_value());
}
