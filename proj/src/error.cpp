#include "her2/error.hpp"

namespace her2 {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::format: return "format error";
    case ErrorKind::range: return "range error";
    case ErrorKind::identifier: return "identifier error";
    case ErrorKind::empty_collection: return "empty-collection error";
    case ErrorKind::degenerate_input: return "degenerate-input error";
    case ErrorKind::coverage: return "coverage error";
    case ErrorKind::size: return "size error";
    case ErrorKind::training: return "training error";
    case ErrorKind::shape: return "shape error";
    case ErrorKind::integrity: return "integrity error";
    case ErrorKind::packing: return "packing error";
    case ErrorKind::empty_tally: return "empty-tally error";
    case ErrorKind::io: return "io error";
  }
  return "error";
}

FormatError::FormatError(ErrorKind kind, std::string source, std::size_t line,
                         std::string field, const std::string& detail)
    : Error(kind, source + ":" + std::to_string(line) + ": field '" + field +
                      "': " + detail),
      source_(std::move(source)),
      line_(line),
      field_(std::move(field)) {}

}  // namespace her2
