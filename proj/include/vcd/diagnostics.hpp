#pragma once

#include <functional>
#include <string_view>

namespace vcd {

using WarningHandler = std::function<void(std::string_view module, std::string_view message)>;

// Non-fatal conditions (short matching sets, clipped output, ...) are routed
// through a process-wide handler. The default writes one line to stderr.
void warn(std::string_view module, std::string_view message);

// Installs `handler` and returns the previous one. Passing an empty function
// restores the stderr default.
WarningHandler set_warning_handler(WarningHandler handler);

/// RAII override of the warning handler, mainly for tests.
class ScopedWarningHandler {
 public:
  explicit ScopedWarningHandler(WarningHandler handler)
      : previous_(set_warning_handler(std::move(handler))) {}
  ~ScopedWarningHandler() { set_warning_handler(std::move(previous_)); }
  ScopedWarningHandler(const ScopedWarningHandler&) = delete;
  ScopedWarningHandler& operator=(const ScopedWarningHandler&) = delete;

 private:
  WarningHandler previous_;
};

}  // namespace vcd
