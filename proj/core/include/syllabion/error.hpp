#pragma once

#include <stdexcept>
#include <string>

namespace syllabion {

// All recoverable failures in the library surface as this exception. The
// message is a single line so the CLI can print it behind a fixed prefix.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void fail(const std::string& message) { throw Error(message); }

inline void check(bool condition, const std::string& message) {
  if (!condition) fail(message);
}

}  // namespace syllabion
