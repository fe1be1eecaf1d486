// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace slice {

/// Raised when training or inference produces non-finite values; the CLI maps
/// it to its own exit code.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Round-trip-exact, locale-independent double formatting for CSV artifacts.
inline std::string format_double(double v) {
  char buf[32];
  int written = std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(written));
}

}  // namespace slice
