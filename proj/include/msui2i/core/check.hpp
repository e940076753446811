#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace msui2i {

// Invalid caller input (bad shapes, bad config values, missing keys).
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Fault detected at runtime (non-finite loss, corrupted file, I/O error).
struct RuntimeFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
template <typename E>
[[noreturn]] inline void raise(const char* cond, const std::string& msg) {
  std::ostringstream os;
  os << msg;
  if (cond && *cond) os << " [" << cond << "]";
  throw E(os.str());
}
}  // namespace detail

}  // namespace msui2i

#define MSUI2I_REQUIRE(cond, msg)                                              \
  do {                                                                         \
    if (!(cond)) ::msui2i::detail::raise<::msui2i::InvalidArgument>(#cond, (msg)); \
  } while (0)

#define MSUI2I_FAULT_IF(cond, msg)                                             \
  do {                                                                         \
    if (cond) ::msui2i::detail::raise<::msui2i::RuntimeFault>("", (msg));      \
  } while (0)
