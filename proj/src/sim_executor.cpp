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

#include "persistkern/sim_executor.hpp"

#include "persistkern/error.hpp"
#include "persistkern/host_api.hpp"

#include <algorithm>
#include <utility>

namespace pk {

using protocol::StatusWord;
using protocol::WorkerPhase;

namespace {

std::uint32_t first_sm(SmMask mask) {
  return mask.empty() ? 0 : static_cast<std::uint32_t>(std::countr_zero(mask.bits()));
}

} // namespace

std::optional<std::string> JitterProfile::check(const char* prefix) const {
  if (spike_per_mille > 1000) {
    return std::string(prefix) + ".spike_per_mille must be at most 1000";
  }
  if (spike_min > spike_max) {
    return std::string(prefix) + ".spike_min must not exceed spike_max";
  }
  return std::nullopt;
}

std::uint64_t JitterModel::below(std::uint64_t bound_inclusive) {
  const std::uint64_t r = rng_();
  if (bound_inclusive == ~std::uint64_t{0}) {
    return r;
  }
  return r % (bound_inclusive + 1);
}

Cycles JitterModel::sample(JitterSource source) {
  const JitterProfile& p = source == JitterSource::link ? cfg_.link : cfg_.runtime;
  if (!p.enabled()) {
    return 0;
  }
  Cycles j = p.uniform_max > 0 ? below(p.uniform_max) : 0;
  if (p.spike_per_mille > 0 && below(999) < p.spike_per_mille) {
    j += p.spike_min + below(p.spike_max - p.spike_min);
  }
  return j;
}

std::optional<std::string> SimCalibration::check() const {
  if (lk_poll_interval_cycles == 0) {
    return "lk.poll_interval_cycles must be positive";
  }
  return std::nullopt;
}

SimExecutor::SimExecutor(SimParams params)
    : params_(std::move(params)), device_(build_device(params_.device)),
      jitter_(params_.seed, params_.jitter) {
  for (const auto& why : {params_.link.check(), params_.calibration.check(), params_.jitter.link.check("jitter.link"),
                          params_.jitter.runtime.check("jitter.runtime")}) {
    if (why) {
      throw Error(ErrorCode::config, *why);
    }
  }
  if (params_.hang_budget_cycles == 0) {
    throw Error(ErrorCode::config, "sim.hang_budget_cycles must be positive");
  }
  const auto n = device_.config.num_sms;
  host_view_.entries.resize(n);
  poll_token_.assign(n, 0);
  poll_at_.assign(n, std::nullopt);
  last_published_.assign(n, std::nullopt);
  boot_at_.assign(n, 0);
  exited_at_.assign(n, 0);
}

void SimExecutor::schedule(Cycles due, std::uint32_t rank, EventKind kind, std::uint32_t sm, std::uint32_t word,
                           std::uint64_t token) {
  queue_.push(Event{due, rank, next_seq_++, kind, sm, word, token});
}

void SimExecutor::process(const Event& ev) {
  switch (ev.kind) {
  case EventKind::deliver: {
    for (const auto& [sm, word] : deliveries_[ev.token]) {
      device_.board.entries[sm].to_gpu = StatusWord{word};
      wake(sm, now_ + params_.calibration.lk_poll_interval_cycles);
    }
    deliveries_[ev.token].clear();
    break;
  }
  case EventKind::poll:
    if (ev.token == poll_token_[ev.sm]) {
      on_poll(ev.sm);
    }
    break;
  case EventKind::complete:
    on_complete(ev.sm);
    break;
  case EventKind::visible:
    host_view_.entries[ev.sm].from_gpu = StatusWord{ev.word};
    break;
  case EventKind::kernel_done:
    kernel_in_flight_ = false;
    kernel_done_at_ = now_;
    break;
  }
}

void SimExecutor::wake(std::uint32_t sm, Cycles at) {
  const SmState& s = device_.sms[sm];
  if (s.protocol.phase == WorkerPhase::exited || s.busy_until || !lk_resident_) {
    return;
  }
  if (poll_at_[sm] && *poll_at_[sm] <= at) {
    return;
  }
  poll_at_[sm] = at;
  schedule(at, sm_rank(sm), EventKind::poll, sm, 0, ++poll_token_[sm]);
}

void SimExecutor::publish(std::uint32_t sm, StatusWord word) {
  if (last_published_[sm] == word.raw) {
    return;
  }
  last_published_[sm] = word.raw;
  device_.board.entries[sm].from_gpu = word;
  trace_.push_back({next_step_++, protocol::Side::device, sm, word.raw});
  schedule(now_ + params_.link.d2h_flush_cycles, link_rank(), EventKind::visible, sm, word.raw);
}

void SimExecutor::on_poll(std::uint32_t sm) {
  poll_at_[sm].reset();
  SmState& s = device_.sms[sm];
  const protocol::WorkerState before = s.protocol;
  const StatusWord observed = device_.board.entries[sm].to_gpu;
  protocol::StepResult r;
  try {
    r = protocol::worker_step(before, observed);
  } catch (const ProtocolViolation& e) {
    throw ProtocolViolation("SM " + std::to_string(sm) + " at cycle " + std::to_string(now_) + ": " + e.what(),
                            e.raw_word());
  }
  s.protocol = r.next;
  const auto published_before = last_published_[sm];
  if (r.publish) {
    publish(sm, *r.publish);
  }

  switch (r.action.kind) {
  case protocol::WorkerAction::Kind::begin_work: {
    auto it = slots_.find(r.action.slot);
    if (it == slots_.end()) {
      throw ProtocolViolation("SM " + std::to_string(sm) + ": no descriptor in slot " + std::to_string(r.action.slot),
                              observed.raw);
    }
    const Cycles cost = work_cost(device_.config, it->second);
    s.busy_until = now_ + cost;
    dispatches_.push_back({sm, r.action.slot, now_});
    schedule(*s.busy_until, sm_rank(sm), EventKind::complete, sm);
    return;
  }
  case protocol::WorkerAction::Kind::exit:
    exited_at_[sm] = now_;
    return;
  case protocol::WorkerAction::Kind::none:
    break;
  }
  if (!(r.next == before) || last_published_[sm] != published_before) {
    wake(sm, now_ + params_.calibration.lk_poll_interval_cycles);
  }
  // Otherwise the cell is unchanged and the worker is parked until a delivery.
}

void SimExecutor::on_complete(std::uint32_t sm) {
  SmState& s = device_.sms[sm];
  const auto r = protocol::worker_complete(s.protocol);
  s.protocol = r.next;
  s.busy_until.reset();
  publish(sm, *r.publish);
  wake(sm, now_ + params_.calibration.lk_poll_interval_cycles);
}

void SimExecutor::pop_and_process() {
  const Event ev = queue_.top();
  queue_.pop();
  now_ = ev.due;
  try {
    process(ev);
  } catch (...) {
    failed_ = true;
    throw;
  }
}

void SimExecutor::advance_to(Cycles t) {
  while (!queue_.empty() && queue_.top().due <= t) {
    pop_and_process();
  }
  now_ = std::max(now_, t);
}

template <typename Pred>
void SimExecutor::run_until(Pred&& done, const std::string& stuck_on, std::uint32_t sm) {
  while (!done()) {
    if (queue_.empty()) {
      stall(stuck_on, sm);
    }
    pop_and_process();
  }
}

void SimExecutor::drain() {
  while (!queue_.empty()) {
    pop_and_process();
  }
}

void SimExecutor::stall(const std::string& what, std::uint32_t sm) {
  failed_ = true;
  now_ += params_.hang_budget_cycles;
  throw HangDetected("hang detected on SM " + std::to_string(sm) + ": " + what + " (no progress for " +
                         std::to_string(params_.hang_budget_cycles) + " cycles)",
                     sm);
}

Cycles SimExecutor::transfer_or_stall(std::uint64_t bytes, const std::string& what, std::uint32_t sm) {
  if (auto c = transfer_cycles(params_.link, bytes)) {
    return *c;
  }
  drain();
  stall(what + ": " + std::to_string(bytes) + "-byte transfer deferred indefinitely by the driver", sm);
}

void SimExecutor::ensure_alive() const {
  if (failed_) {
    throw Error(ErrorCode::hang, "simulated device is stuck after an earlier failure");
  }
}

void SimExecutor::host_write(std::uint32_t sm, StatusWord word) {
  host_view_.entries[sm].to_gpu = word;
  trace_.push_back({next_step_++, protocol::Side::host, sm, word.raw});
}

void SimExecutor::host_sync(SmMask mask, std::uint64_t bytes) {
  const std::uint32_t first = first_sm(mask);
  const Cycles cost = transfer_or_stall(bytes, "to_GPU sync", first) + jitter_.sample(JitterSource::link);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> words;
  mask.for_each([&](std::uint32_t sm) { words.emplace_back(sm, host_view_.entries[sm].to_gpu.raw); });
  deliveries_.push_back(std::move(words));
  schedule(now_ + cost, link_rank(), EventKind::deliver, 0, 0, deliveries_.size() - 1);
  advance_to(now_ + cost);
}

Cycles SimExecutor::host_poll_until(SmMask mask, std::uint32_t word) {
  const std::uint32_t first = first_sm(mask);
  const auto bytes = mailbox_sync_bytes(device_, mask, params_.calibration.workaround_full_board);
  const Cycles period = transfer_or_stall(bytes, "from_GPU readback", first);
  const Cycles t0 = now_;
  bool all = false;
  run_until(
      [&] {
        all = true;
        mask.for_each([&](std::uint32_t sm) { all = all && host_view_.entries[sm].from_gpu.raw == word; });
        return all;
      },
      "waiting for from_GPU word " + std::to_string(word), first);
  // The host sees the word at the end of the first readback that starts
  // after it became visible.
  const Cycles seen = now_ - t0;
  const Cycles reads = std::max<Cycles>(1, period == 0 ? 1 : (seen + period - 1) / period);
  const Cycles t_obs = t0 + reads * std::max<Cycles>(period, 1);
  advance_to(t_obs);
  return t_obs;
}

Executor::Span SimExecutor::lk_boot() {
  ensure_alive();
  if (lk_resident_ || kernel_in_flight_) {
    throw Error(ErrorCode::busy, "device already runs a kernel");
  }
  const Cycles t0 = now_;
  const auto n = device_.config.num_sms;
  for (std::uint32_t sm = 0; sm < n; ++sm) {
    host_write(sm, StatusWord{protocol::kThreadNop});
  }
  advance_to(now_ + params_.calibration.lk_host_write_cycles * n);
  // Board upload and persistent-kernel launch are part of the boot constant.
  const Cycles boot = now_ + params_.calibration.lk_init_boot_cycles;
  advance_to(boot);
  if (auto mismatch = check_block_mapping(device_)) {
    failed_ = true;
    throw Error(ErrorCode::init_failure, "persistent block " + std::to_string(mismatch->block_id) +
                                             " landed on SM " + std::to_string(mismatch->sm_id));
  }
  lk_resident_ = true;
  for (std::uint32_t sm = 0; sm < n; ++sm) {
    device_.board.entries[sm].to_gpu = host_view_.entries[sm].to_gpu;
    device_.sms[sm].protocol = protocol::WorkerState::booting();
    boot_at_[sm] = boot;
    wake(sm, boot);
  }
  host_poll_until(SmMask::all(n), protocol::kThreadNop);
  return {t0, now_ - t0};
}

Executor::Span SimExecutor::lk_post(SmMask mask, const WorkDescriptor& work) {
  ensure_alive();
  if (!lk_resident_) {
    throw Error(ErrorCode::invalid_argument, "trigger without a resident persistent kernel");
  }
  const StatusWord word = protocol::encode_to_gpu(protocol::HostCommand::work(work.slot));
  mask.for_each([&](std::uint32_t sm) {
    if (host_view_.entries[sm].from_gpu.raw != protocol::kThreadNop) {
      throw Error(ErrorCode::busy, "SM " + std::to_string(sm) + " is not idle (from_GPU = " +
                                       std::to_string(host_view_.entries[sm].from_gpu.raw) + ")");
    }
  });
  const Cycles t0 = now_;
  slots_[work.slot] = work; // descriptor before publication
  mask.for_each([&](std::uint32_t sm) { host_write(sm, word); });
  advance_to(now_ + params_.calibration.lk_host_write_cycles * static_cast<Cycles>(mask.count()));
  host_sync(mask, mailbox_sync_bytes(device_, mask, params_.calibration.workaround_full_board));
  return {t0, now_ - t0};
}

Executor::Span SimExecutor::lk_await(SmMask mask) {
  ensure_alive();
  const Cycles t0 = now_;
  const Cycles seen = host_poll_until(mask, protocol::kThreadFinished);
  const Span span{t0, seen - t0};

  mask.for_each([&](std::uint32_t sm) { host_write(sm, StatusWord{protocol::kThreadNop}); });
  advance_to(now_ + params_.calibration.lk_host_write_cycles * static_cast<Cycles>(mask.count()));
  host_sync(mask, mailbox_sync_bytes(device_, mask, params_.calibration.workaround_full_board));
  host_poll_until(mask, protocol::kThreadNop);
  return span;
}

Executor::Span SimExecutor::lk_shutdown() {
  ensure_alive();
  if (!lk_resident_) {
    throw Error(ErrorCode::invalid_argument, "dispose without a resident persistent kernel");
  }
  for (const auto& s : device_.sms) {
    if (s.protocol.phase == WorkerPhase::working) {
      throw Error(ErrorCode::busy, "dispose while SM " + std::to_string(s.sm_id) + " is working");
    }
  }
  const Cycles t0 = now_;
  const auto n = device_.config.num_sms;
  const SmMask all = SmMask::all(n);
  for (std::uint32_t sm = 0; sm < n; ++sm) {
    host_write(sm, StatusWord{protocol::kThreadExit});
  }
  advance_to(now_ + params_.calibration.lk_host_write_cycles * n);
  host_sync(all, mailbox_sync_bytes(device_, all, params_.calibration.workaround_full_board));
  run_until(
      [&] {
        return std::all_of(device_.sms.begin(), device_.sms.end(),
                           [](const SmState& s) { return s.protocol.phase == WorkerPhase::exited; });
      },
      "waiting for persistent workers to exit", 0);
  const Cycles last_exit = *std::max_element(exited_at_.begin(), exited_at_.end());
  advance_to(std::max(now_, last_exit + params_.link.completion_signal_cycles) +
             params_.calibration.lk_dispose_teardown_cycles);
  lk_resident_ = false;
  return {t0, now_ - t0};
}

Executor::Span SimExecutor::base_alloc() {
  ensure_alive();
  if (base_allocated_) {
    throw Error(ErrorCode::busy, "baseline context already allocated");
  }
  const Cycles t0 = now_;
  advance_to(now_ + params_.calibration.base_alloc_cycles);
  base_allocated_ = true;
  return {t0, now_ - t0};
}

Executor::Span SimExecutor::base_launch(SmMask mask, const WorkDescriptor& work) {
  ensure_alive();
  if (!base_allocated_) {
    throw Error(ErrorCode::invalid_argument, "launch before alloc");
  }
  if (lk_resident_) {
    throw Error(ErrorCode::busy, "the persistent kernel owns every SM");
  }
  if (kernel_in_flight_ || kernel_done_at_) {
    throw Error(ErrorCode::busy, "previous kernel has not been waited for");
  }
  const Cycles cost = work_cost(device_.config, work);
  const Cycles t0 = now_;
  advance_to(now_ + params_.calibration.base_launch_setup_cycles + jitter_.sample(JitterSource::runtime));
  const std::uint32_t first = first_sm(mask);
  const Cycles xfer = transfer_or_stall(params_.calibration.base_launch_payload_bytes, "kernel launch", first) +
                      jitter_.sample(JitterSource::link);
  advance_to(now_ + xfer);
  kernel_in_flight_ = true;
  schedule(now_ + cost, sm_rank(first), EventKind::kernel_done, first);
  return {t0, now_ - t0};
}

Executor::Span SimExecutor::base_await() {
  ensure_alive();
  if (!kernel_in_flight_ && !kernel_done_at_) {
    throw Error(ErrorCode::invalid_argument, "wait without a launched kernel");
  }
  const Cycles t0 = now_;
  run_until([&] { return kernel_done_at_.has_value(); }, "waiting for kernel completion", 0);
  advance_to(std::max(now_, *kernel_done_at_ + params_.link.completion_signal_cycles));
  kernel_done_at_.reset();
  return {t0, now_ - t0};
}

Executor::Span SimExecutor::base_release() {
  ensure_alive();
  if (!base_allocated_) {
    throw Error(ErrorCode::invalid_argument, "dispose before alloc");
  }
  if (kernel_in_flight_) {
    throw Error(ErrorCode::busy, "dispose while a kernel is running");
  }
  const Cycles t0 = now_;
  advance_to(now_ + params_.calibration.base_dispose_cycles);
  base_allocated_ = false;
  return {t0, now_ - t0};
}

Executor::Span SimExecutor::copy(std::uint64_t bytes, Direction dir) {
  ensure_alive();
  const Cycles t0 = now_;
  const Cycles cost = transfer_or_stall(bytes, dir == Direction::host_to_device ? "copyin" : "copyout", 0) +
                      jitter_.sample(JitterSource::link);
  advance_to(now_ + cost);
  return {t0, now_ - t0};
}

void SimExecutor::inject_to_gpu(std::uint32_t sm, std::uint32_t raw_word) {
  ensure_alive();
  if (sm >= device_.config.num_sms) {
    throw Error(ErrorCode::invalid_argument, "SM out of range");
  }
  host_write(sm, StatusWord{raw_word});
  try {
    host_sync(SmMask::single(sm), mailbox_sync_bytes(device_, SmMask::single(sm),
                                                     params_.calibration.workaround_full_board));
    drain();
  } catch (...) {
    failed_ = true;
    throw;
  }
}

// ---------------------------------------------------------------------------

SimTrace run_until_quiescent(const SimParams& params, const std::vector<HostOp>& program) {
  SimExecutor exec(params);
  LkSession lk(exec);
  BaselineSession base(exec);
  SimTrace out;
  auto keep = [&](const PhaseTiming& t, bool baseline) {
    out.timings.push_back(t);
    out.timing_is_baseline.push_back(baseline);
  };
  using K = HostOp::Kind;
  for (const HostOp& op : program) {
    switch (op.kind) {
    case K::lk_init:
      keep(lk.init(), false);
      break;
    case K::lk_trigger:
      keep(lk.trigger(op.mask, op.work), false);
      break;
    case K::lk_wait:
      keep(lk.wait(op.mask), false);
      break;
    case K::lk_copyin:
      keep(lk.copyin(op.bytes), false);
      break;
    case K::lk_copyout:
      keep(lk.copyout(op.bytes), false);
      break;
    case K::lk_dispose:
      keep(lk.dispose(), false);
      break;
    case K::base_alloc:
      keep(base.alloc(), true);
      break;
    case K::base_launch:
      keep(base.launch(op.mask, op.work), true);
      break;
    case K::base_wait:
      keep(base.wait(), true);
      break;
    case K::base_copyin:
      keep(base.copyin(op.bytes), true);
      break;
    case K::base_copyout:
      keep(base.copyout(op.bytes), true);
      break;
    case K::base_dispose:
      keep(base.dispose(), true);
      break;
    }
  }
  exec.drain();
  out.protocol = exec.trace();
  out.dispatches = exec.dispatches();
  for (const auto& s : exec.device().sms) {
    out.final_states.push_back(s.protocol);
  }
  out.final_cycle = exec.now();
  return out;
}

std::string format_timings_csv(const std::vector<PhaseTiming>& timings) {
  std::string out = "phase,sm_mask,start_cycle,end_cycle\n";
  for (const auto& t : timings) {
    out += to_string(t.phase);
    out += ',';
    out += t.mask.to_hex();
    out += ',';
    out += std::to_string(t.start);
    out += ',';
    out += std::to_string(t.end());
    out += '\n';
  }
  return out;
}

} // namespace pk
