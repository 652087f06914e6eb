#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace vcd {

/// Error raised by every module. `module` and `code` are stable identifiers
/// (e.g. "core" / "duplicate_id"); `subject` names the offending record,
/// speaker or file when there is one.
class Error : public std::runtime_error {
 public:
  Error(std::string module, std::string code, const std::string& message,
        std::string subject = {})
      : std::runtime_error(module + ": " + code + ": " + message),
        module_(std::move(module)),
        code_(std::move(code)),
        subject_(std::move(subject)),
        message_(message) {}

  const std::string& module() const noexcept { return module_; }
  const std::string& code() const noexcept { return code_; }
  const std::string& subject() const noexcept { return subject_; }
  /// The message without the "module: code: " prefix of what().
  const std::string& message() const noexcept { return message_; }

 private:
  std::string module_;
  std::string code_;
  std::string subject_;
  std::string message_;
};

}  // namespace vcd
