#pragma once

#include <stdexcept>
#include <string>

namespace intentspace {

// Error taxonomy shared by the library and the CLI. Each category carries a
// process exit code so commands can fail with a stable, scriptable status.
class Error : public std::runtime_error {
 public:
  Error(std::string message, const char* category, int exit_code)
      : std::runtime_error(std::move(message)),
        category_(category),
        exit_code_(exit_code) {}

  const char* category() const noexcept { return category_; }
  int exit_code() const noexcept { return exit_code_; }

 private:
  const char* category_;
  int exit_code_;
};

struct ConfigError : Error {
  explicit ConfigError(std::string m) : Error(std::move(m), "config", 2) {}
};

struct RangeError : Error {
  explicit RangeError(std::string m) : Error(std::move(m), "range", 2) {}
};

struct EmptyInputError : Error {
  explicit EmptyInputError(std::string m) : Error(std::move(m), "empty-input", 2) {}
};

struct SplitError : Error {
  explicit SplitError(std::string m) : Error(std::move(m), "split", 2) {}
};

struct UnsupportedFormError : Error {
  explicit UnsupportedFormError(std::string m)
      : Error(std::move(m), "unsupported-form", 2) {}
};

struct ParseError : Error {
  explicit ParseError(std::string m) : Error(std::move(m), "parse", 3) {}
};

struct FormatError : Error {
  explicit FormatError(std::string m) : Error(std::move(m), "format", 3) {}
};

struct ShapeError : Error {
  explicit ShapeError(std::string m) : Error(std::move(m), "shape", 4) {}
};

struct NumericError : Error {
  explicit NumericError(std::string m) : Error(std::move(m), "numeric", 4) {}
};

struct DomainError : Error {
  explicit DomainError(std::string m) : Error(std::move(m), "domain", 4) {}
};

struct EvalError : Error {
  explicit EvalError(std::string m) : Error(std::move(m), "eval", 5) {}
};

struct IoError : Error {
  explicit IoError(std::string m) : Error(std::move(m), "io", 6) {}
};

}  // namespace intentspace
