#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace vaxsurr {

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// Reproducible sub-seed for (master, path...) e.g. derive_seed(seed, {rep, 7}).
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

// 64-bit FNV-1a, rendered as 16 hex digits by hash_hex.
std::uint64_t fnv1a64(std::string_view bytes);
std::string_view hash_hex(std::uint64_t h, char (&buf)[17]);

}  // namespace vaxsurr
