#include "audiomod/errors.hpp"

namespace audiomod {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kData: return "data";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kUnsupported: return "unsupported";
    case ErrorKind::kTooShort: return "too_short";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kContract: return "contract";
  }
  return "unknown";
}

}  // namespace audiomod
