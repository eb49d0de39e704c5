#include "hicle/error.hpp"

namespace hicle {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kStructural: return "structural error";
    case ErrorKind::kEmptyInput: return "empty input";
    case ErrorKind::kBatchTooSmall: return "batch too small";
    case ErrorKind::kSelfPair: return "self pair";
    case ErrorKind::kNormalization: return "normalization error";
    case ErrorKind::kDegenerateBatch: return "degenerate batch";
    case ErrorKind::kRange: return "range error";
    case ErrorKind::kConfiguration: return "configuration error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kNumeric: return "numeric error";
    case ErrorKind::kPairing: return "pairing error";
    case ErrorKind::kIo: return "i/o error";
    case ErrorKind::kDegenerateTask: return "degenerate task";
  }
  return "error";
}

}  // namespace hicle
