#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace copic {

/// Root of every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration: unknown unit names, malformed config files, bad overrides.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values in features, losses or head outputs.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint or run-directory contents that cannot be loaded.
class LoadError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(int line, int column, const std::string& message)
      : Error(std::to_string(line) + ":" + std::to_string(column) + ": " + message),
        line_(line),
        column_(column),
        message_(message) {}

  int line() const { return line_; }
  int column() const { return column_; }
  const std::string& message() const { return message_; }

 private:
  int line_;
  int column_;
  std::string message_;
};

/// Syntactically valid source that uses something outside the PlanLang subset.
class UnsupportedConstruct : public ParseError {
 public:
  UnsupportedConstruct(int line, int column, const std::string& construct)
      : ParseError(line, column, "unsupported construct: " + construct), construct_(construct) {}

  const std::string& construct() const { return construct_; }

 private:
  std::string construct_;
};

/// Runtime failure of a planning program (missing key, type error, ...).
class ProgramFault : public Error {
 public:
  ProgramFault(int program_id, const std::string& message)
      : Error("program fault (program " + std::to_string(program_id) + "): " + message),
        program_id_(program_id) {}

  int program_id() const { return program_id_; }

 private:
  int program_id_;
};

class SandboxBudgetExceeded : public Error {
 public:
  explicit SandboxBudgetExceeded(const std::string& what)
      : Error("sandbox budget exceeded: " + what) {}
};

class ScoringError : public Error {
 public:
  using Error::Error;
};

/// Network or HTTP-level failure talking to a remote model.
class TransportError : public Error {
 public:
  using Error::Error;
};

class GatewayError : public Error {
 public:
  using Error::Error;
};

class NoViableExperts : public GatewayError {
 public:
  NoViableExperts() : GatewayError("no viable experts: every generated program faulted") {}
};

class NoCodeBlock : public Error {
 public:
  NoCodeBlock() : Error("no code block in response") {}
};

}  // namespace copic
