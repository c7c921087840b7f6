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

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pk {

enum class ErrorCode {
  invalid_argument,
  config,
  encoding,
  protocol_violation,
  hang,
  busy,
  init_failure,
  unsupported_workload,
  unknown_scenario,
  parse,
  io,
  comparison,
  internal,
};

const char* to_string(ErrorCode code) noexcept;

/// Base of every exception thrown by the library. The C API maps `code()`
/// onto its status enum.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

class ProtocolViolation : public Error {
public:
  ProtocolViolation(const std::string& what, std::uint32_t raw_word)
      : Error(ErrorCode::protocol_violation, what), raw_word_(raw_word) {}
  std::uint32_t raw_word() const noexcept { return raw_word_; }

private:
  std::uint32_t raw_word_;
};

/// An executor stopped making progress. `sm()` is the SM whose transfer or
/// completion never arrived.
class HangDetected : public Error {
public:
  HangDetected(const std::string& what, std::uint32_t sm) : Error(ErrorCode::hang, what), sm_(sm) {}
  std::uint32_t sm() const noexcept { return sm_; }

private:
  std::uint32_t sm_;
};

class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t line) : Error(ErrorCode::parse, what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

} // namespace pk
