#pragma once

#include <stdexcept>
#include <string>

namespace csg0 {

// Bad input data or a violated precondition on user-supplied files.
class ValidationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ParseError : public ValidationError {
  public:
    ParseError(const std::string& what, std::size_t row)
        : ValidationError(what + " (row " + std::to_string(row) + ")"), row_(row) {}
    std::size_t row() const { return row_; }

  private:
    std::size_t row_;
};

class ConfigError : public ValidationError {
  public:
    using ValidationError::ValidationError;
};

class LookupError : public std::out_of_range {
  public:
    using std::out_of_range::out_of_range;
};

// Non-finite values surfaced during training.
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace csg0
