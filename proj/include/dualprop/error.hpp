#pragma once

#include <stdexcept>
#include <string>

namespace dualprop {

enum class ErrorKind {
  kBadInput,       // dimension/length mismatches, invalid arguments
  kBadMagic,       // file magic number does not match
  kTruncated,      // file ends before the declared payload
  kShapeMismatch,  // declared shape disagrees with payload or expectation
  kMissingWeight,  // weight archive lacks a required tensor
  kConfig,         // bad config key/value or incompatible mode
  kIo,             // cannot open/read/write a file
};

const char* to_string(ErrorKind kind);

/// Process exit code for a failure of the given kind (0 ok, 2 bad input,
/// 3 format error, 4 config error).
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorKind::kBadInput, what);
}

}  // namespace dualprop
