#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mf {

namespace detail {
inline void format_into(std::ostringstream&) {}
template <typename A, typename... Rest>
void format_into(std::ostringstream& os, const A& a, const Rest&... rest) {
  os << a;
  format_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string format_msg(const Args&... args) {
  std::ostringstream os;
  detail::format_into(os, args...);
  return os.str();
}

// Hard error with message. Used for contract violations (bad shapes,
// unknown words, incompatible checkpoints).
template <typename... Args>
[[noreturn]] void fail(const Args&... args) {
  throw std::runtime_error(format_msg(args...));
}

template <typename... Args>
void check(bool cond, const Args&... args) {
  if (!cond) fail(args...);
}

// Short-circuiting form for hot paths: message arguments are only evaluated
// on failure.
#define MF_CHECK(cond, ...) \
  do {                      \
    if (!(cond)) ::mf::fail(__VA_ARGS__); \
  } while (0)

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// FNV-1a, used for deriving stream-specific sub-seeds from the run seed.
inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// SHA-256 hex digest of a file, for output manifests.
std::string sha256_file_hex(const std::string& path);
std::string sha256_hex(const void* data, size_t len);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace mf
