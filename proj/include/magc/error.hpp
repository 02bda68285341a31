#pragma once

#include <stdexcept>
#include <string>

namespace magc {

// Error categories. The numeric values double as CLI exit codes.
enum class ErrorCode : int {
  kUsage = 1,
  kIo = 2,
  kFormat = 3,
  kModelMismatch = 4,
  kNumeric = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

// Shape/argument violations are reported as usage errors.
inline void check(bool ok, const std::string& what,
                  ErrorCode code = ErrorCode::kUsage) {
  if (!ok) throw Error(code, what);
}

// Re-throws |e| with "stage: " prepended, keeping its code.
[[noreturn]] inline void rethrow_with_stage(const Error& e,
                                            const std::string& stage) {
  throw Error(e.code(), stage + ": " + e.what());
}

}  // namespace magc
