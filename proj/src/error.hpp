// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace qmem {

enum class ErrorCode {
  kInvalidArgument,
  kDomain,
  kInsufficientCounts,
  kParse,
  kConfig,
  kConvergence,
  kIo,
};

// Every failure raised by the core carries one of the codes above; the C
// boundary maps them one-to-one onto qmem_status.
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

}  // namespace qmem
