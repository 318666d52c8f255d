#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace styleap {

/// Splits on ASCII whitespace, dropping empty fields.
std::vector<std::string> split_whitespace(std::string_view text);

std::vector<std::string> split(std::string_view text, char delimiter);

std::string join(const std::vector<std::string>& parts, std::string_view separator);

std::string_view trim(std::string_view text);

/// Byte offsets of each UTF-8 code point start, plus a final entry equal to text.size().
/// Invalid lead bytes are treated as single-byte code points.
std::vector<std::size_t> utf8_boundaries(std::string_view text);

/// 64-bit FNV-1a. Stable across platforms; used for feature hashing and seed derivation.
constexpr std::uint64_t fnv1a64(std::string_view data,
                                std::uint64_t hash = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Sub-seed for a named consumer of randomness. All randomness in a run flows
/// from one base seed through labels like "init", "mix", "kmeans".
constexpr std::uint64_t derive_seed(std::uint64_t base, std::string_view label) noexcept {
  return splitmix64(base ^ fnv1a64(label));
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept {
  return splitmix64(base ^ splitmix64(index + 0x51ed27ULL));
}

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

std::uint32_t crc32(std::string_view bytes) noexcept;

}  // namespace styleap
