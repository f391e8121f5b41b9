//
// Project smipred - Copyright 2026 smipred contributors
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace smipred {

// Base for everything smipred throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument values, off-grid hyperparameters, contract violations.
class ValueError : public Error {
 public:
  using Error::Error;
};

// Tensor shape disagreements.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// File system and parsing problems.
class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {
inline void concat_into(std::ostringstream&) {}
template <typename First, typename... Rest>
void concat_into(std::ostringstream& os, First&& f, Rest&&... rest) {
  os << std::forward<First>(f);
  concat_into(os, std::forward<Rest>(rest)...);
}
}  // namespace detail

template <typename... Parts>
std::string str_cat(Parts&&... parts) {
  std::ostringstream os;
  detail::concat_into(os, std::forward<Parts>(parts)...);
  return os.str();
}

template <typename Exc = ValueError, typename... Parts>
[[noreturn]] void raise(Parts&&... parts) {
  throw Exc(str_cat(std::forward<Parts>(parts)...));
}

// FNV-1a, used for content hashes and seed derivation.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  return fnv1a64(s.data(), s.size());
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

}  // namespace smipred
