#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace caai {

/// Error type for all contract violations (bad shapes, bad files, bad config).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

// Internal shape assertions stay on in release builds; they guard graph
// wiring, not per-element loops, so the cost is negligible.
#define CAAI_CHECK(cond, msg)                                   \
  do {                                                          \
    if (!(cond)) ::caai::fail(std::string("check failed: ") + (msg)); \
  } while (0)

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

/// When enabled, every forward op scans its output for NaN/Inf and throws an
/// Error naming the op. Defaults to on in debug builds. The trainer flips it
/// on temporarily to localize a non-finite loss.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

}  // namespace caai
