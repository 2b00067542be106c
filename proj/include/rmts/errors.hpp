#ifndef RMTS_ERRORS_HPP_
#define RMTS_ERRORS_HPP_

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rmts {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input data (bad row, bad JSON, bad number). Carries a 1-based
// line number when the source is a line-oriented file (0 = unknown).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Structurally valid input that violates a declared constraint
// (score out of range, unknown trait, empty essay).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Input file is missing required columns or sections.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Bad or incomplete configuration (missing rubric, unknown tokenizer, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// The requested backend/provider cannot run in this environment.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// A rationale generation attempt that did not complete for every trait.
// Never returned as a partial result; callers get the per-trait failures.
class GenerationError : public Error {
 public:
  GenerationError(const std::string& what,
                  std::vector<std::pair<std::string, std::string>> failures)
      : Error(what), failures_(std::move(failures)) {}
  const std::vector<std::pair<std::string, std::string>>& failures() const {
    return failures_;
  }

 private:
  std::vector<std::pair<std::string, std::string>> failures_;  // (trait, message)
};

// Rationale rows required by a run but absent from the cache.
class MissingRationalesError : public Error {
 public:
  MissingRationalesError(const std::string& what,
                         std::vector<std::pair<std::string, std::string>> missing)
      : Error(what), missing_(std::move(missing)) {}
  const std::vector<std::pair<std::string, std::string>>& missing() const {
    return missing_;
  }

 private:
  std::vector<std::pair<std::string, std::string>> missing_;  // (essay_id, trait)
};

}  // namespace rmts

#endif  // RMTS_ERRORS_HPP_
