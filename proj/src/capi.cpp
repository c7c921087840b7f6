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

#include "persistkern/persistkern.h"

#include "persistkern/bench.hpp"
#include "persistkern/config.hpp"
#include "persistkern/error.hpp"
#include "persistkern/host_api.hpp"
#include "persistkern/native_executor.hpp"
#include "persistkern/protocol.hpp"
#include "persistkern/sim_executor.hpp"

#include <cstring>
#include <fstream>
#include <memory>
#include <new>
#include <sstream>
#include <string>

struct pk_config {
  pk::Config cfg;
  std::string text; // last returned string
};

struct pk_report {
  pk::ScenarioReport report;
  std::string csv;
  std::string table;
  std::string phases;
  std::string trace;
  std::string failure;
};

struct pk_session {
  std::unique_ptr<pk::Executor> exec;
  std::unique_ptr<pk::LkSession> lk;
  std::unique_ptr<pk::BaselineSession> base;
  std::string text;
};

namespace {

thread_local std::string g_last_error;

pk_status status_of(pk::ErrorCode code) {
  switch (code) {
  case pk::ErrorCode::invalid_argument:
    return PK_ERR_INVALID_ARGUMENT;
  case pk::ErrorCode::config:
    return PK_ERR_CONFIG;
  case pk::ErrorCode::encoding:
    return PK_ERR_ENCODING;
  case pk::ErrorCode::protocol_violation:
    return PK_ERR_PROTOCOL_VIOLATION;
  case pk::ErrorCode::hang:
    return PK_ERR_HANG;
  case pk::ErrorCode::busy:
    return PK_ERR_BUSY;
  case pk::ErrorCode::init_failure:
    return PK_ERR_INIT_FAILURE;
  case pk::ErrorCode::unsupported_workload:
    return PK_ERR_UNSUPPORTED_WORKLOAD;
  case pk::ErrorCode::unknown_scenario:
    return PK_ERR_UNKNOWN_SCENARIO;
  case pk::ErrorCode::parse:
    return PK_ERR_PARSE;
  case pk::ErrorCode::io:
    return PK_ERR_IO;
  case pk::ErrorCode::comparison:
    return PK_ERR_COMPARISON;
  case pk::ErrorCode::internal:
    return PK_ERR_INTERNAL;
  }
  return PK_ERR_INTERNAL;
}

pk_status fail(pk_status st, std::string msg) {
  g_last_error = std::move(msg);
  return st;
}

// Runs `f`, translating exceptions into status codes.
template <typename F>
pk_status guarded(F&& f) {
  try {
    return f();
  } catch (const pk::Error& e) {
    return fail(status_of(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(PK_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(PK_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(PK_ERR_INTERNAL, "unknown exception");
  }
}

#define PK_REQUIRE(cond, what)                                                                                       \
  do {                                                                                                               \
    if (!(cond)) {                                                                                                   \
      return fail(PK_ERR_INVALID_ARGUMENT, what);                                                                    \
    }                                                                                                                \
  } while (0)

pk::Backend to_backend(pk_backend b) { return b == PK_BACKEND_NATIVE ? pk::Backend::native : pk::Backend::sim; }

std::string read_file(const char* path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw pk::Error(pk::ErrorCode::io, std::string("cannot read '") + path + "'");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

pk_status validate_text(const std::string& text, int* valid, pk_violation_info* info) {
  std::vector<std::size_t> lines;
  const auto records = pk::protocol::parse_trace(text, &lines);
  const auto v = pk::protocol::validate_trace(records);
  *valid = v ? 0 : 1;
  if (info) {
    std::memset(info, 0, sizeof *info);
    if (v) {
      info->index = v->index;
      info->line = v->index < lines.size() ? lines[v->index] : 0;
      info->step = v->record.step;
      info->sm = v->record.sm;
      info->word = v->record.word;
      std::strncpy(info->reason, v->reason.c_str(), sizeof info->reason - 1);
    }
  }
  return PK_OK;
}

void put(uint64_t* ticks, const pk::PhaseTiming& t) {
  if (ticks) {
    *ticks = t.ticks;
  }
}

} // namespace

extern "C" {

const char* pk_version(void) { return "1.0.0"; }

const char* pk_status_name(pk_status status) {
  switch (status) {
  case PK_OK:
    return "ok";
  case PK_ERR_INVALID_ARGUMENT:
    return "invalid-argument";
  case PK_ERR_CONFIG:
    return "config";
  case PK_ERR_ENCODING:
    return "encoding";
  case PK_ERR_PROTOCOL_VIOLATION:
    return "protocol-violation";
  case PK_ERR_HANG:
    return "hang-detected";
  case PK_ERR_BUSY:
    return "busy";
  case PK_ERR_INIT_FAILURE:
    return "init-failure";
  case PK_ERR_UNSUPPORTED_WORKLOAD:
    return "unsupported-workload";
  case PK_ERR_UNKNOWN_SCENARIO:
    return "unknown-scenario";
  case PK_ERR_PARSE:
    return "parse";
  case PK_ERR_IO:
    return "io";
  case PK_ERR_COMPARISON:
    return "comparison";
  case PK_ERR_INTERNAL:
    return "internal";
  }
  return "unknown";
}

const char* pk_last_error_message(void) { return g_last_error.c_str(); }

pk_status pk_config_new(pk_config** out) {
  PK_REQUIRE(out, "out is NULL");
  return guarded([&] {
    *out = new pk_config{};
    return PK_OK;
  });
}

void pk_config_free(pk_config* cfg) { delete cfg; }

pk_status pk_config_load(pk_config* cfg, const char* path) {
  PK_REQUIRE(cfg && path, "NULL argument");
  return guarded([&] {
    cfg->cfg = pk::load_config_file(path, cfg->cfg);
    return PK_OK;
  });
}

pk_status pk_config_parse(pk_config* cfg, const char* text) {
  PK_REQUIRE(cfg && text, "NULL argument");
  return guarded([&] {
    cfg->cfg = pk::parse_config(text, cfg->cfg);
    return PK_OK;
  });
}

pk_status pk_config_set(pk_config* cfg, const char* key, const char* value) {
  PK_REQUIRE(cfg && key && value, "NULL argument");
  return guarded([&] {
    pk::Config next = cfg->cfg;
    pk::config_set(next, key, value);
    next.validate();
    cfg->cfg = next;
    return PK_OK;
  });
}

pk_status pk_config_get(pk_config* cfg, const char* key, const char** value) {
  PK_REQUIRE(cfg && key && value, "NULL argument");
  return guarded([&] {
    cfg->text = pk::config_get(cfg->cfg, key);
    *value = cfg->text.c_str();
    return PK_OK;
  });
}

pk_status pk_config_text(pk_config* cfg, const char** text) {
  PK_REQUIRE(cfg && text, "NULL argument");
  return guarded([&] {
    cfg->text = pk::canonical_text(cfg->cfg);
    *text = cfg->text.c_str();
    return PK_OK;
  });
}

uint64_t pk_config_hash(const pk_config* cfg) { return cfg ? pk::config_hash(cfg->cfg) : 0; }

pk_status pk_calibration_report(pk_config* cfg, const char** text) {
  PK_REQUIRE(cfg && text, "NULL argument");
  return guarded([&] {
    cfg->text = pk::calibration_report(cfg->cfg);
    *text = cfg->text.c_str();
    return PK_OK;
  });
}

void pk_run_options_init(pk_run_options* opts) {
  if (opts) {
    opts->seed = pk::kDefaultSeed;
    opts->backend = PK_BACKEND_SIM;
    opts->workaround = -1;
  }
}

const char* pk_scenario_names(void) {
  static const std::string names = [] {
    std::string out;
    for (const auto& n : pk::scenario_names()) {
      out += (out.empty() ? "" : "\n") + n;
    }
    return out;
  }();
  return names.c_str();
}

pk_status pk_run_scenario(const pk_config* cfg, const char* scenario, const pk_run_options* opts, pk_report** out) {
  PK_REQUIRE(cfg && scenario && out, "NULL argument");
  return guarded([&] {
    pk_run_options o;
    pk_run_options_init(&o);
    if (opts) {
      o = *opts;
    }
    PK_REQUIRE(o.workaround >= -1 && o.workaround <= 1, "workaround must be -1, 0 or 1");
    PK_REQUIRE(o.backend == PK_BACKEND_SIM || o.backend == PK_BACKEND_NATIVE, "unknown backend");
    pk::RunOptions ro;
    ro.seed = o.seed;
    ro.backend = to_backend(o.backend);
    if (o.workaround >= 0) {
      ro.workaround = o.workaround == 1;
    }
    auto rep = std::make_unique<pk_report>();
    rep->report = pk::run_named_scenario(scenario, cfg->cfg, ro);
    rep->csv = pk::format_report_csv(rep->report);
    rep->table = pk::format_report_table(rep->report);
    const auto unit = ro.backend == pk::Backend::sim ? pk::TimeUnit::cycles : pk::TimeUnit::nanoseconds;
    rep->phases = pk::format_phase_csv(rep->report.phase_rows, unit);
    rep->trace = "# step,side,sm,word\n" + pk::protocol::format_trace(rep->report.trace);
    if (const auto& f = rep->report.failure) {
      rep->failure = std::string(pk::to_string(f->model)) + " " + std::string(pk::to_string(f->phase)) + " rep " +
                     std::to_string(f->rep) + ": " + f->what;
    }
    *out = rep.release();
    return PK_OK;
  });
}

void pk_report_free(pk_report* report) { delete report; }
int pk_report_passed(const pk_report* report) { return report && report->report.passed() ? 1 : 0; }
const char* pk_report_csv(const pk_report* report) { return report ? report->csv.c_str() : ""; }
const char* pk_report_table(const pk_report* report) { return report ? report->table.c_str() : ""; }
const char* pk_report_phases_csv(const pk_report* report) { return report ? report->phases.c_str() : ""; }
const char* pk_report_trace(const pk_report* report) { return report ? report->trace.c_str() : ""; }
const char* pk_report_failure(const pk_report* report) {
  return report && report->report.failure ? report->failure.c_str() : nullptr;
}

pk_status pk_validate_trace_text(const char* text, int* valid, pk_violation_info* info) {
  PK_REQUIRE(text && valid, "NULL argument");
  return guarded([&] { return validate_text(text, valid, info); });
}

pk_status pk_validate_trace_file(const char* path, int* valid, pk_violation_info* info) {
  PK_REQUIRE(path && valid, "NULL argument");
  return guarded([&] { return validate_text(read_file(path), valid, info); });
}

pk_status pk_session_new(const pk_config* cfg, pk_backend backend, pk_model model, uint64_t seed, pk_session** out) {
  PK_REQUIRE(cfg && out, "NULL argument");
  PK_REQUIRE(backend == PK_BACKEND_SIM || backend == PK_BACKEND_NATIVE, "unknown backend");
  PK_REQUIRE(model == PK_MODEL_LK || model == PK_MODEL_BASELINE, "unknown model");
  return guarded([&] {
    auto s = std::make_unique<pk_session>();
    if (backend == PK_BACKEND_SIM) {
      pk::SimParams p = cfg->cfg.sim;
      p.seed = seed;
      s->exec = std::make_unique<pk::SimExecutor>(p);
    } else {
      s->exec = std::make_unique<pk::NativeExecutor>(cfg->cfg.native);
    }
    if (model == PK_MODEL_LK) {
      s->lk = std::make_unique<pk::LkSession>(*s->exec);
    } else {
      s->base = std::make_unique<pk::BaselineSession>(*s->exec);
    }
    *out = s.release();
    return PK_OK;
  });
}

void pk_session_free(pk_session* session) {
  if (session) {
    session->lk.reset();
    session->base.reset();
    session->exec.reset();
    delete session;
  }
}

uint32_t pk_session_num_sms(const pk_session* session) { return session ? session->exec->num_sms() : 0; }

pk_status pk_session_init(pk_session* session, uint64_t* ticks) {
  PK_REQUIRE(session, "session is NULL");
  return guarded([&] {
    put(ticks, session->lk ? session->lk->init() : session->base->alloc());
    return PK_OK;
  });
}

pk_status pk_session_trigger(pk_session* session, uint64_t sm_mask, uint32_t slot, uint64_t iterations,
                             uint64_t* ticks) {
  PK_REQUIRE(session, "session is NULL");
  return guarded([&] {
    const auto work = pk::WorkDescriptor::busy_loop(iterations, slot);
    const pk::SmMask mask{sm_mask};
    put(ticks, session->lk ? session->lk->trigger(mask, work) : session->base->launch(mask, work));
    return PK_OK;
  });
}

pk_status pk_session_wait(pk_session* session, uint64_t sm_mask, uint64_t* ticks) {
  PK_REQUIRE(session, "session is NULL");
  return guarded([&] {
    put(ticks, session->lk ? session->lk->wait(pk::SmMask{sm_mask}) : session->base->wait());
    return PK_OK;
  });
}

pk_status pk_session_copy(pk_session* session, uint64_t bytes, int to_device, uint64_t* ticks) {
  PK_REQUIRE(session, "session is NULL");
  return guarded([&] {
    if (session->lk) {
      put(ticks, to_device ? session->lk->copyin(bytes) : session->lk->copyout(bytes));
    } else {
      put(ticks, to_device ? session->base->copyin(bytes) : session->base->copyout(bytes));
    }
    return PK_OK;
  });
}

pk_status pk_session_dispose(pk_session* session, uint64_t* ticks) {
  PK_REQUIRE(session, "session is NULL");
  return guarded([&] {
    put(ticks, session->lk ? session->lk->dispose() : session->base->dispose());
    return PK_OK;
  });
}

pk_status pk_session_trace(pk_session* session, const char** text) {
  PK_REQUIRE(session && text, "NULL argument");
  return guarded([&] {
    session->text = pk::protocol::format_trace(session->exec->trace());
    *text = session->text.c_str();
    return PK_OK;
  });
}

} // extern "C"
