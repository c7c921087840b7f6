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

#ifndef PERSISTKERN_H
#define PERSISTKERN_H

/*
 * C interface of libpersistkern.
 *
 * Every call returns a pk_status. On failure, pk_last_error_message() holds
 * a description for the calling thread until its next failing call.
 * Strings returned through `const char**` are owned by the handle they came
 * from and stay valid until that handle is freed or the same getter is called
 * again on it.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PK_API __declspec(dllexport)
#else
#define PK_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pk_status {
  PK_OK = 0,
  PK_ERR_INVALID_ARGUMENT = 1,
  PK_ERR_CONFIG = 2,
  PK_ERR_ENCODING = 3,
  PK_ERR_PROTOCOL_VIOLATION = 4,
  PK_ERR_HANG = 5,
  PK_ERR_BUSY = 6,
  PK_ERR_INIT_FAILURE = 7,
  PK_ERR_UNSUPPORTED_WORKLOAD = 8,
  PK_ERR_UNKNOWN_SCENARIO = 9,
  PK_ERR_PARSE = 10,
  PK_ERR_IO = 11,
  PK_ERR_COMPARISON = 12,
  PK_ERR_INTERNAL = 13
} pk_status;

typedef enum pk_backend { PK_BACKEND_SIM = 0, PK_BACKEND_NATIVE = 1 } pk_backend;
typedef enum pk_model { PK_MODEL_LK = 0, PK_MODEL_BASELINE = 1 } pk_model;

typedef struct pk_config pk_config;
typedef struct pk_report pk_report;
typedef struct pk_session pk_session;

PK_API const char* pk_version(void);
PK_API const char* pk_status_name(pk_status status);
PK_API const char* pk_last_error_message(void);

/* Configuration ---------------------------------------------------------- */

/* Built-in calibrated defaults. */
PK_API pk_status pk_config_new(pk_config** out);
PK_API void pk_config_free(pk_config* cfg);
/* Applies a config file / text on top of the current values. On error the
   handle is left unchanged. */
PK_API pk_status pk_config_load(pk_config* cfg, const char* path);
PK_API pk_status pk_config_parse(pk_config* cfg, const char* text);
PK_API pk_status pk_config_set(pk_config* cfg, const char* key, const char* value);
PK_API pk_status pk_config_get(pk_config* cfg, const char* key, const char** value);
/* Canonical key = value dump. */
PK_API pk_status pk_config_text(pk_config* cfg, const char** text);
PK_API uint64_t pk_config_hash(const pk_config* cfg);
/* Calibration constants next to the reference averages they reproduce. */
PK_API pk_status pk_calibration_report(pk_config* cfg, const char** text);

/* Scenarios -------------------------------------------------------------- */

typedef struct pk_run_options {
  uint64_t seed;
  pk_backend backend;
  int workaround; /* -1: from config, 0: off, 1: on */
} pk_run_options;

PK_API void pk_run_options_init(pk_run_options* opts);
/* Names separated by '\n'. */
PK_API const char* pk_scenario_names(void);
/* PK_OK whenever the scenario ran; check pk_report_passed() for the verdict.
   opts may be NULL. */
PK_API pk_status pk_run_scenario(const pk_config* cfg, const char* scenario, const pk_run_options* opts,
                                 pk_report** out);
PK_API void pk_report_free(pk_report* report);
PK_API int pk_report_passed(const pk_report* report);
PK_API const char* pk_report_csv(const pk_report* report);
PK_API const char* pk_report_table(const pk_report* report);
PK_API const char* pk_report_phases_csv(const pk_report* report);
PK_API const char* pk_report_trace(const pk_report* report);
/* NULL when the run did not fail. */
PK_API const char* pk_report_failure(const pk_report* report);

/* Trace validation -------------------------------------------------------- */

typedef struct pk_violation_info {
  size_t index;  /* record position */
  size_t line;   /* 1-based line in the text, 0 if unknown */
  uint64_t step;
  uint32_t sm;
  uint32_t word;
  char reason[256];
} pk_violation_info;

/* PK_OK with *valid set to 1 or 0; PK_ERR_PARSE on malformed text. info may
   be NULL. */
PK_API pk_status pk_validate_trace_text(const char* text, int* valid, pk_violation_info* info);
PK_API pk_status pk_validate_trace_file(const char* path, int* valid, pk_violation_info* info);

/* Sessions ---------------------------------------------------------------- */

/* One offload session. For PK_MODEL_BASELINE, init is Alloc and trigger is
   Launch (the mask of wait is ignored). Elapsed time goes to *ticks (cycles
   for the simulator, nanoseconds for the native backend); ticks may be NULL. */
PK_API pk_status pk_session_new(const pk_config* cfg, pk_backend backend, pk_model model, uint64_t seed,
                                pk_session** out);
PK_API void pk_session_free(pk_session* session);
PK_API uint32_t pk_session_num_sms(const pk_session* session);
PK_API pk_status pk_session_init(pk_session* session, uint64_t* ticks);
PK_API pk_status pk_session_trigger(pk_session* session, uint64_t sm_mask, uint32_t slot, uint64_t iterations,
                                    uint64_t* ticks);
PK_API pk_status pk_session_wait(pk_session* session, uint64_t sm_mask, uint64_t* ticks);
PK_API pk_status pk_session_copy(pk_session* session, uint64_t bytes, int to_device, uint64_t* ticks);
PK_API pk_status pk_session_dispose(pk_session* session, uint64_t* ticks);
/* Mailbox writes so far, one `step,side,sm,word` line each. */
PK_API pk_status pk_session_trace(pk_session* session, const char** text);

#ifdef __cplusplus
}
#endif

#endif /* PERSISTKERN_H */
