#include "vcd/diagnostics.hpp"

#include <iostream>
#include <mutex>

namespace vcd {
namespace {

std::mutex& handler_mutex() {
  static std::mutex m;
  return m;
}

WarningHandler& current_handler() {
  static WarningHandler h;
  return h;
}

}  // namespace

void warn(std::string_view module, std::string_view message) {
  std::lock_guard<std::mutex> lock(handler_mutex());
  if (current_handler()) {
    current_handler()(module, message);
  } else {
    std::cerr << "warning: " << module << ": " << message << '\n';
  }
}

WarningHandler set_warning_handler(WarningHandler handler) {
  std::lock_guard<std::mutex> lock(handler_mutex());
  std::swap(current_handler(), handler);
  return handler;
}

}  // namespace vcd
