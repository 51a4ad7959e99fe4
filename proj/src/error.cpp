#include "dualprop/error.hpp"

namespace dualprop {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kBadInput: return "bad input";
    case ErrorKind::kBadMagic: return "bad magic";
    case ErrorKind::kTruncated: return "truncated file";
    case ErrorKind::kShapeMismatch: return "shape mismatch";
    case ErrorKind::kMissingWeight: return "missing weight";
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kIo: return "io error";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kBadInput:
    case ErrorKind::kIo:
      return 2;
    case ErrorKind::kBadMagic:
    case ErrorKind::kTruncated:
    case ErrorKind::kShapeMismatch:
    case ErrorKind::kMissingWeight:
      return 3;
    case ErrorKind::kConfig:
      return 4;
  }
  return 2;
}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace dualprop
