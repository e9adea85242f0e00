#pragma once

#include <cstdint>
#include <random>

namespace ptpmm {

using Rng = std::mt19937_64;

// SplitMix64 finalizer. Used to derive independent, reproducible seeds for
// trials and streams from a single master seed.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stream ids keep training and test draws apart even when the user passes the
// same master seed for both.
enum class Stream : std::uint64_t {
  kTraining = 0x7452'4149'4e00'0001ULL,
  kTest = 0x5445'5354'0000'0002ULL,
  kForward = 0x4657'4400'0000'0003ULL,
  kReverse = 0x5245'5600'0000'0004ULL,
};

constexpr std::uint64_t derive_seed(std::uint64_t master, Stream stream,
                                    std::uint64_t index = 0) noexcept {
  return mix64(mix64(master ^ static_cast<std::uint64_t>(stream)) + index);
}

}  // namespace ptpmm
