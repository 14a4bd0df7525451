#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace palettediff {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic child seed for a tuple of stream identifiers.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> ids) noexcept {
  std::uint64_t h = mix64(base);
  for (std::uint64_t id : ids) h = mix64(h ^ mix64(id + 0x632be59bd9b4e019ULL));
  return h;
}

/// 64-bit FNV-1a, streaming.
class Fnv1a {
 public:
  void update(const void* data, std::size_t size) noexcept {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) noexcept { update(s.data(), s.size()); }
  std::uint64_t digest() const noexcept { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

/// SHA-1 of "blob <size>\0" + bytes, as git computes object ids.
std::string git_blob_sha1(std::span<const std::uint8_t> bytes);
std::string git_blob_sha1_file(const std::string& path);

/// Stops glibc from returning large freed blocks to the OS. Training churns
/// through same-sized activation buffers, and mmap/munmap per buffer costs
/// about a third of the wall time otherwise. No-op on other allocators.
void retain_freed_memory();

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws Error(decode_error) on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace palettediff
