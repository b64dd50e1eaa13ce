#pragma once

#include <stdexcept>
#include <string>

namespace derm {

enum class ErrorCode {
  invalid_argument,
  range,
  parse,
  not_found,
  config,
  integrity,
  transport,
  cache_miss,
  empty_input,
  schema,
  authority,
  divergence,
  io,
  internal,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace derm
