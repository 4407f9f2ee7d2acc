#pragma once

#include <stdexcept>
#include <string>

namespace cellcal {

enum class ErrorCode {
  InvalidArgument,  // bad call-site input (usage)
  Validation,       // schema / invariant violation in data
  NotFound,         // missing frame, sensor, file member
  Io,               // filesystem failure
  Degenerate,       // solver could not make progress
  Internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void throwValidation(const std::string& msg) {
  throw Error(ErrorCode::Validation, msg);
}

[[noreturn]] inline void throwNotFound(const std::string& msg) {
  throw Error(ErrorCode::NotFound, msg);
}

}  // namespace cellcal
