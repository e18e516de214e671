#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace labelmatch {

// 64-bit FNV-1a.
class Fnv1a64 {
 public:
  static constexpr std::uint64_t kOffsetBasis = 0xcbf29ce484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;

  void update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      _state ^= c;
      _state *= kPrime;
    }
  }
  std::uint64_t digest() const { return _state; }

 private:
  std::uint64_t _state = kOffsetBasis;
};

inline std::uint64_t fnv1a64(std::string_view bytes) {
  Fnv1a64 h;
  h.update(bytes);
  return h.digest();
}

// Hash of a file's full byte content. Throws DataError if unreadable.
std::uint64_t hash_file(const std::string& path);

std::string to_hex(std::uint64_t value);

}  // namespace labelmatch
