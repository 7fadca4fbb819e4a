#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace milab {

enum class ErrorCode {
  kShapeMismatch,
  kDomain,
  kInvalidArgument,
  kNonFinite,
  kValidation,
  kParse,
  kIo,
};

std::string_view to_string(ErrorCode code);

// Every recoverable failure in the library surfaces as this type; callers
// switch on code() rather than parsing the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace milab
