#pragma once
// Exception hierarchy shared by every seke module.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace seke {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed persisted data; line is 1-based, 0 when not line oriented.
class SchemaError : public Error {
 public:
  SchemaError(std::size_t line, const std::string& what)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Prompt construction
class EmptyTargets : public Error {
 public:
  EmptyTargets() : Error("no target tasks: every description is already annotated") {}
};

class EmptySampleSet : public Error {
 public:
  EmptySampleSet() : Error("summary prompt requires at least one sampled round") {}
};

// Annotator transport
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int status = 0) : Error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

class AuthError : public Error {
 public:
  using Error::Error;
};

class BudgetExceeded : public Error {
 public:
  explicit BudgetExceeded(std::size_t limit)
      : Error("annotator call budget of " + std::to_string(limit) + " exhausted"), limit_(limit) {}
  std::size_t limit() const noexcept { return limit_; }

 private:
  std::size_t limit_;
};

// Sampling loop
class InsufficientSamples : public Error {
 public:
  InsufficientSamples() : Error("variance needs at least 2 rounds containing the task") {}
};

class AnnotatorExhausted : public Error {
 public:
  using Error::Error;
};

class SummaryParseError : public Error {
 public:
  using Error::Error;
};

// Dataset assembly
class IncompleteLabels : public Error {
 public:
  using Error::Error;
};

class LabelLeak : public Error {
 public:
  using Error::Error;
};

class DegenerateSplit : public Error {
 public:
  using Error::Error;
};

// Evaluation
class LengthMismatch : public Error {
 public:
  using Error::Error;
};

class AlignmentError : public Error {
 public:
  explicit AlignmentError(std::vector<std::string> ids)
      : Error(describe(ids)), unmatched_(std::move(ids)) {}
  const std::vector<std::string>& unmatched_ids() const noexcept { return unmatched_; }

 private:
  static std::string describe(const std::vector<std::string>& ids) {
    std::string msg = "unmatched record ids:";
    for (const auto& id : ids) msg += " " + id;
    return msg;
  }
  std::vector<std::string> unmatched_;
};

}  // namespace seke
