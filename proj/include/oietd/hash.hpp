// FNV-1a based hashing used for config hashes and deterministic seed derivation.
#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace oietd {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

constexpr std::uint64_t fnv1a(std::string_view data, std::uint64_t h = kFnvOffset) {
  for (unsigned char c : data) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

constexpr std::uint64_t fnv1a_u64(std::uint64_t v, std::uint64_t h = kFnvOffset) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xffu;
    h *= kFnvPrime;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

// Mixes an arbitrary list of string/integer components into one 64-bit seed.
template <typename... Parts>
std::uint64_t mix_seed(Parts&&... parts) {
  std::uint64_t h = kFnvOffset;
  auto feed = [&h](auto&& p) {
    using T = std::decay_t<decltype(p)>;
    if constexpr (std::is_integral_v<T>) {
      h = fnv1a_u64(static_cast<std::uint64_t>(p), h);
    } else {
      h = fnv1a(std::string_view(p), h);
    }
  };
  (feed(std::forward<Parts>(parts)), ...);
  return h;
}

}  // namespace oietd
