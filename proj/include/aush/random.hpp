#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace aush {

using Rng = std::mt19937_64;

std::uint64_t fnv1a(std::string_view s);
// 16 hex digits of fnv1a, used as a provenance hash.
std::string hash_hex(std::string_view s);

// Named substream of a master seed: splitmix64 over (seed, FNV-1a(name)).
std::uint64_t derive_seed(std::uint64_t master, std::string_view name);
std::uint64_t derive_seed(std::uint64_t master, std::string_view name, std::uint64_t index);

// k distinct indices from [0, n), uniform, in draw order.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng);

// k distinct indices drawn sequentially, each draw proportional to the
// weights of the indices not yet drawn. Once the remaining positive weight is
// exhausted, further draws are uniform over what is left.
std::vector<std::size_t> weighted_sample_without_replacement(std::span<const double> weights,
                                                             std::size_t k, Rng& rng);

}  // namespace aush
