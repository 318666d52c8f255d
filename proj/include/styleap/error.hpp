#pragma once

#include <stdexcept>
#include <string>

namespace styleap {

enum class ErrorKind {
  Config,     // invalid option or precondition on configuration values
  Format,     // malformed input file or record
  Io,         // missing or unreadable path
  Checksum,   // stored checksum does not match contents
  Dimension,  // vector dimension mismatch
  NotFound,   // unknown style id, tag, or registry entry
  Runtime,    // numerical failure during training or decoding
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace styleap
