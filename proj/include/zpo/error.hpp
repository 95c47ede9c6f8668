#pragma once

#include <stdexcept>
#include <string>

namespace zpo {

enum class ErrorCode : int {
  ok = 0,
  invalid_argument = 1,
  domain = 2,
  numerical = 3,
  io = 4,
  resolution = 5,
  internal = 6,
};

// All library failures are thrown as zpo::Error; the C layer maps code() to a status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(ErrorCode::invalid_argument, msg);
}

}  // namespace zpo
