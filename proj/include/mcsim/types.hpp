#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mcsim {

using Word = std::int32_t;
using Addr = std::uint32_t;
using Cycle = std::uint64_t;
using CoreId = int;
using NodeId = int;

inline constexpr Addr kWordBytes = 4;

// Wrapping two's-complement arithmetic on words.
inline Word wrap_add(Word a, Word b) {
  return static_cast<Word>(static_cast<std::uint32_t>(a) + static_cast<std::uint32_t>(b));
}
inline Word wrap_sub(Word a, Word b) {
  return static_cast<Word>(static_cast<std::uint32_t>(a) - static_cast<std::uint32_t>(b));
}
inline Word wrap_mul(Word a, Word b) {
  return static_cast<Word>(static_cast<std::uint32_t>(a) * static_cast<std::uint32_t>(b));
}

/// Base for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mcsim
