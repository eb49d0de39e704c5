#pragma once

#include <stdexcept>
#include <string>

namespace hicle {

enum class ErrorKind {
  kStructural,
  kEmptyInput,
  kBatchTooSmall,
  kSelfPair,
  kNormalization,
  kDegenerateBatch,
  kRange,
  kConfiguration,
  kFormat,
  kNumeric,
  kPairing,
  kIo,
  kDegenerateTask,
};

const char* to_string(ErrorKind kind);

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace hicle
