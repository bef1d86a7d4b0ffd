#pragma once

#include <stdexcept>
#include <string>

namespace decodelab {

enum class Errc {
  configuration,
  format,
  validation,
  sequence_complete,
  invalid_continuation,
  truncation,
  parse,
  parameter,
  length,
  empty_collection,
  shape,
  aggregation,
  usage,
  capacity,
  io,
  rejected,
  unknown_item,
  internal,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::configuration: return "configuration error";
    case Errc::format: return "format error";
    case Errc::validation: return "validation error";
    case Errc::sequence_complete: return "sequence-complete error";
    case Errc::invalid_continuation: return "invalid-continuation error";
    case Errc::truncation: return "truncation error";
    case Errc::parse: return "parse error";
    case Errc::parameter: return "parameter error";
    case Errc::length: return "length error";
    case Errc::empty_collection: return "empty-collection error";
    case Errc::shape: return "shape error";
    case Errc::aggregation: return "aggregation error";
    case Errc::usage: return "usage error";
    case Errc::capacity: return "capacity error";
    case Errc::io: return "i/o error";
    case Errc::rejected: return "rejected";
    case Errc::unknown_item: return "unknown item";
    case Errc::internal: return "internal invariant error";
  }
  return "error";
}

/// Stable machine-readable identifier, equal to the enumerator name.
inline const char* errc_id(Errc c) {
  switch (c) {
    case Errc::configuration: return "configuration";
    case Errc::format: return "format";
    case Errc::validation: return "validation";
    case Errc::sequence_complete: return "sequence_complete";
    case Errc::invalid_continuation: return "invalid_continuation";
    case Errc::truncation: return "truncation";
    case Errc::parse: return "parse";
    case Errc::parameter: return "parameter";
    case Errc::length: return "length";
    case Errc::empty_collection: return "empty_collection";
    case Errc::shape: return "shape";
    case Errc::aggregation: return "aggregation";
    case Errc::usage: return "usage";
    case Errc::capacity: return "capacity";
    case Errc::io: return "io";
    case Errc::rejected: return "rejected";
    case Errc::unknown_item: return "unknown_item";
    case Errc::internal: return "internal";
  }
  return "internal";
}

/// Every failure the library reports carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace decodelab
