#pragma once

#include <concepts>
#include <stdexcept>
#include <string>

namespace wrpn {

enum class ErrorCode {
  invalid_argument = 1,
  shape_mismatch,
  domain,
  io,
  parse,
  numeric,
  state,
};

// All library failures are reported as wrpn::Error; the C API translates the
// code into wrpn_status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

inline void require(bool cond, ErrorCode code, const char* what) {
  if (!cond) fail(code, what);
}

// Message built only on failure; use inside per-element loops.
template <std::invocable F>
void require(bool cond, ErrorCode code, F&& make_message) {
  if (!cond) fail(code, make_message());
}

}  // namespace wrpn
