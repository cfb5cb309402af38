#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aush/item_stats.hpp"
#include "aush/profile.hpp"
#include "aush/random.hpp"

namespace aush {

class BudgetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Gaussian rating snapped to the grid and clipped. stddev 0 returns snap(mean).
double draw_rating(double mean, double stddev, const RatingScale& scale, Rng& rng);

// Random filler items, excluding `excluded` (typically S and the target).
std::vector<ItemId> draw_filler_items(std::size_t num_items, std::span<const ItemId> excluded, std::size_t count,
                                      Rng& rng);

// The random and average attacks give no special treatment to S, so each
// profile spends its whole P - 1 non-target budget on fillers.
ProfileSet gen_random_attack(const AttackConfig& cfg, const ItemStats& stats, std::uint64_t seed);
ProfileSet gen_average_attack(const AttackConfig& cfg, const ItemStats& stats, std::uint64_t seed);
ProfileSet gen_segment_attack(const AttackConfig& cfg, const ItemStats& stats, std::uint64_t seed);
ProfileSet gen_bandwagon_attack(const AttackConfig& cfg, const ItemStats& stats, std::uint64_t seed);

// One segment-attack row over a given filler set: S at max, fillers at min.
ProfileRow segment_profile(const AttackConfig& cfg, std::span<const ItemId> filler_items);

// The |S| most popular items other than the target, ties to the lower id.
std::vector<ItemId> most_popular_items(const ItemStats& stats, std::size_t count, ItemId exclude);

enum class BaselineKind { Random, Average, Segment, Bandwagon };
std::string to_string(BaselineKind k);
BaselineKind parse_baseline_kind(const std::string& s);
ProfileSet gen_baseline_attack(BaselineKind kind, const AttackConfig& cfg, const ItemStats& stats,
                               std::uint64_t seed);

}  // namespace aush
