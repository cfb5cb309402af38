#include "aush/random.hpp"

#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace aush {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hash_hex(std::string_view s) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(s)));
    return buf;
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view name) {
    return splitmix64(splitmix64(master) ^ fnv1a(name));
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view name, std::uint64_t index) {
    return splitmix64(derive_seed(master, name) + index);
}

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
    if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    // partial Fisher-Yates
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(k);
    return pool;
}

std::vector<std::size_t> weighted_sample_without_replacement(std::span<const double> weights,
                                                             std::size_t k, Rng& rng) {
    const std::size_t n = weights.size();
    if (k > n) throw std::invalid_argument("weighted_sample_without_replacement: k > n");
    std::vector<double> w(weights.begin(), weights.end());
    for (double x : w)
        if (!(x >= 0.0)) throw std::invalid_argument("weighted sampling: negative or NaN weight");
    std::vector<char> taken(n, 0);
    std::vector<std::size_t> out;
    out.reserve(k);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t draw = 0; draw < k; ++draw) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (!taken[i]) total += w[i];
        std::size_t chosen = n;
        if (total > 0.0) {
            double r = unit(rng) * total;
            for (std::size_t i = 0; i < n; ++i) {
                if (taken[i] || w[i] <= 0.0) continue;
                chosen = i;
                r -= w[i];
                if (r < 0.0) break;
            }
        } else {
            std::size_t remaining = n - out.size();
            std::uniform_int_distribution<std::size_t> pick(0, remaining - 1);
            std::size_t skip = pick(rng);
            for (std::size_t i = 0; i < n; ++i) {
                if (taken[i]) continue;
                if (skip-- == 0) {
                    chosen = i;
                    break;
                }
            }
        }
        taken[chosen] = 1;
        out.push_back(chosen);
    }
    return out;
}

}  // namespace aush
