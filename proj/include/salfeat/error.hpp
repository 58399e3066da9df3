#pragma once

#include <stdexcept>
#include <string>

namespace salfeat {

enum class ErrorKind {
  Parse,
  Format,
  InvalidDimensions,
  EmptyInput,
  Shape,
  DegenerateInput,
  Validation,
  Io,
  Index,
  Channel,
  Configuration,
  Model,
  Convergence,
  TooSmall,
  NoFixation,
  DegenerateMap,
  UndefinedNegative,
  EmptyNegative,
  Layout,
  DegenerateLabel,
  Protocol,
  Fold,
  Leakage,
};

const char* to_string(ErrorKind kind);

// Every failure raised by the library. The kind is stable and is what the
// C API and the CLI translate into status and exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  // true for problems in user-supplied configuration (exit code 3),
  // false for data/IO problems (exit code 2).
  bool is_configuration_error() const noexcept;

 private:
  ErrorKind kind_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorKind::Parse, "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace salfeat
