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

// persistkern command-line driver. Talks to the library through the C API only.
//
//   persistkern run --scenario table2-single-sm [--config F] [--seed N]
//                   [--backend sim|native] [--out DIR] [--workaround on|off]
//   persistkern validate TRACE
//   persistkern calibration [--config F]
//
// Exit status: 0 pass, 1 scenario or threshold failure / trace violation,
// 2 usage, config or parse error.

#include "persistkern/persistkern.h"

#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;

struct ConfigHandle {
  pk_config* p = nullptr;
  ~ConfigHandle() { pk_config_free(p); }
};

struct ReportHandle {
  pk_report* p = nullptr;
  ~ReportHandle() { pk_report_free(p); }
};

int report_error(pk_status st) {
  std::cerr << "persistkern: " << pk_status_name(st) << ": " << pk_last_error_message() << '\n';
  return kExitUsage;
}

// Loads the built-in defaults plus an optional config file.
std::optional<int> load_config(ConfigHandle& cfg, const std::string& path) {
  if (auto st = pk_config_new(&cfg.p); st != PK_OK) {
    return report_error(st);
  }
  if (!path.empty()) {
    if (auto st = pk_config_load(cfg.p, path.c_str()); st != PK_OK) {
      return report_error(st);
    }
  }
  return std::nullopt;
}

bool write_file(const std::filesystem::path& path, const char* text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  return static_cast<bool>(out);
}

std::optional<std::uint64_t> parse_seed(const std::string& text) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used, 10);
    if (used == text.size() && text.find('-') == std::string::npos) {
      return v;
    }
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

struct RunArgs {
  std::string scenario;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string backend = "sim";
  std::string out;
  std::string workaround;
};

int cmd_run(const RunArgs& a) {
  ConfigHandle cfg;
  if (auto rc = load_config(cfg, a.config)) {
    return *rc;
  }
  pk_run_options opts;
  pk_run_options_init(&opts);
  if (a.seed) {
    opts.seed = *a.seed;
  } else if (const char* env = std::getenv("PERSISTKERN_SEED"); env && *env) {
    const auto s = parse_seed(env);
    if (!s) {
      std::cerr << "persistkern: PERSISTKERN_SEED is not an unsigned integer: '" << env << "'\n";
      return kExitUsage;
    }
    opts.seed = *s;
  }
  opts.backend = a.backend == "native" ? PK_BACKEND_NATIVE : PK_BACKEND_SIM;
  opts.workaround = a.workaround.empty() ? -1 : (a.workaround == "on" ? 1 : 0);

  ReportHandle rep;
  if (auto st = pk_run_scenario(cfg.p, a.scenario.c_str(), &opts, &rep.p); st != PK_OK) {
    return report_error(st);
  }
  std::cout << pk_report_table(rep.p);
  if (const char* f = pk_report_failure(rep.p)) {
    std::cerr << "persistkern: scenario failed: " << f << '\n';
  }
  if (!a.out.empty()) {
    std::error_code ec;
    const std::filesystem::path dir(a.out);
    std::filesystem::create_directories(dir, ec);
    const bool ok = !ec && write_file(dir / "report.csv", pk_report_csv(rep.p)) &&
                    write_file(dir / "report.txt", pk_report_table(rep.p)) &&
                    write_file(dir / "phases.csv", pk_report_phases_csv(rep.p)) &&
                    write_file(dir / "trace.csv", pk_report_trace(rep.p));
    if (!ok) {
      std::cerr << "persistkern: cannot write reports to '" << a.out << "'\n";
      return kExitUsage;
    }
  }
  return pk_report_passed(rep.p) ? kExitPass : kExitFail;
}

int cmd_validate(const std::string& path) {
  int valid = 0;
  pk_violation_info info;
  if (auto st = pk_validate_trace_file(path.c_str(), &valid, &info); st != PK_OK) {
    return report_error(st);
  }
  if (valid) {
    std::cout << "ok\n";
    return kExitPass;
  }
  std::cout << "violation at record " << info.index << " (line " << info.line << ", step " << info.step << ", SM "
            << info.sm << ", word " << info.word << "): " << info.reason << '\n';
  return kExitFail;
}

int cmd_calibration(const std::string& config) {
  ConfigHandle cfg;
  if (auto rc = load_config(cfg, config)) {
    return *rc;
  }
  const char* text = nullptr;
  if (auto st = pk_calibration_report(cfg.p, &text); st != PK_OK) {
    return report_error(st);
  }
  std::cout << text;
  return kExitPass;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"persistent-kernel offload model: scenarios, trace validation, calibration"};
  app.require_subcommand(1);
  app.set_version_flag("--version", pk_version());

  RunArgs run;
  std::uint64_t seed = 0;
  auto* run_cmd = app.add_subcommand("run", "run a named scenario and print its report");
  run_cmd->add_option("--scenario", run.scenario, "table2-single-sm | table2-full-gpu | table3-worst | pathology")
      ->required();
  run_cmd->add_option("--config", run.config, "config file applied over the built-in calibration");
  auto* seed_opt = run_cmd->add_option("--seed", seed, "jitter seed (default: $PERSISTKERN_SEED, then 1)");
  run_cmd->add_option("--backend", run.backend, "sim or native")->check(CLI::IsMember({"sim", "native"}));
  run_cmd->add_option("--out", run.out, "directory for report.csv, report.txt, phases.csv, trace.csv");
  run_cmd->add_option("--workaround", run.workaround, "full-board mailbox sync: on or off")
      ->check(CLI::IsMember({"on", "off"}));

  std::string trace_path;
  auto* val_cmd = app.add_subcommand("validate", "check a recorded mailbox trace");
  val_cmd->add_option("trace", trace_path, "trace file (step,side,sm,word per line)")->required();

  std::string cal_config;
  auto* cal_cmd = app.add_subcommand("calibration", "print calibration constants and their anchors");
  cal_cmd->add_option("--config", cal_config, "config file applied over the built-in calibration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitPass : kExitUsage;
  }

  if (*run_cmd) {
    if (seed_opt->count() > 0) {
      run.seed = seed;
    }
    return cmd_run(run);
  }
  if (*val_cmd) {
    return cmd_validate(trace_path);
  }
  return cmd_calibration(cal_config);
}
