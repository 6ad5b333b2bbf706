#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace her2 {

enum class ErrorKind {
  format,
  range,
  identifier,
  empty_collection,
  degenerate_input,
  coverage,
  size,
  training,
  shape,
  integrity,
  packing,
  empty_tally,
  io,
};

const char* to_string(ErrorKind kind);

// Single exception type for every recoverable failure in the toolkit. The
// kind drives CLI exit codes and HTTP status mapping.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Parse failures carry the offending line (1-based, header is line 1) and
// field name so diagnostics can point at the exact cell.
class FormatError : public Error {
 public:
  FormatError(ErrorKind kind, std::string source, std::size_t line,
              std::string field, const std::string& detail);

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string source_;
  std::size_t line_;
  std::string field_;
};

}  // namespace her2
