// Copyright 2026 The bilstm-diar Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace diar {

enum class ErrorKind {
  kParameter,
  kParse,
  kNumerical,
  kTraining,
  kConfig,
  kChecksum,
  kVersion,
  kIo,
};

const char* to_string(ErrorKind kind);

// All toolkit failures derive from this. The stage tag is filled in by the
// pipeline when an error crosses a stage boundary.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  Error(ErrorKind kind, std::string stage, const std::string& message)
      : std::runtime_error(message), kind_(kind), stage_(std::move(stage)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& stage() const noexcept { return stage_; }

 private:
  ErrorKind kind_;
  std::string stage_;
};

inline Error parameter_error(const std::string& m) { return {ErrorKind::kParameter, m}; }
inline Error parse_error(const std::string& m) { return {ErrorKind::kParse, m}; }
inline Error numerical_error(const std::string& m) { return {ErrorKind::kNumerical, m}; }
inline Error training_error(const std::string& m) { return {ErrorKind::kTraining, m}; }
inline Error config_error(const std::string& m) { return {ErrorKind::kConfig, m}; }

}  // namespace diar
