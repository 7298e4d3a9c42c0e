#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace invrec {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent, reproducible streams.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for the stream identified by (master, k0, k1, ...). Order matters.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = mix64(master);
  for (auto k : keys) h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> keys = {}) {
  return Rng(derive_seed(master, keys));
}

}  // namespace invrec
