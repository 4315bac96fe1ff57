#pragma once

#include <cstdint>
#include <random>

namespace gridhedge {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of the independent stream `stream` under master seed `seed`.
/// Every path (or bootstrap resample) owns one stream, so results do not
/// depend on how work is split across threads.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
  return std::mt19937_64(stream_seed(seed, stream));
}

/// Derives the seed for a named sub-purpose (e.g. "paths", "bootstrap")
/// from the single user-facing seed.
std::uint64_t derive_seed(std::uint64_t seed, const char* purpose);

}  // namespace gridhedge
