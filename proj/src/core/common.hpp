// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace screenlab {

using Vec = std::vector<double>;

// Error categories surfaced through the C API as status codes.
enum class ErrorCode {
  invalid_argument = 1,
  io = 2,
  unsupported = 3,
  solver = 4,
  internal = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
  throw Error(code, msg);
}

inline void require(bool cond, const std::string& msg,
                    ErrorCode code = ErrorCode::invalid_argument) {
  if (!cond) fail(code, msg);
}

constexpr double kDensityFloor = 1e-12;

}  // namespace screenlab
