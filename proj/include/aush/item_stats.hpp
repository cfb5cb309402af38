#pragma once

#include <span>
#include <string>
#include <vector>

#include "aush/rating_matrix.hpp"

namespace aush {

// How U_S is read for a multi-item selected set.
enum class CoRaterRule { RatedAny, RatedAll };

std::string to_string(CoRaterRule r);
CoRaterRule parse_co_rater_rule(const std::string& s);

struct ItemStats {
    std::vector<double> mean;        // r̄_v; global mean for unrated items
    std::vector<double> stddev;      // population std; global std for unrated items
    std::vector<std::size_t> popularity;  // |U_v|
    std::vector<std::size_t> co_raters;   // |U_v ∩ U_S|
    std::vector<char> mean_fallback;      // 1 when mean/stddev were taken from the global values
    double global_mean = 0.0;
    double global_stddev = 0.0;
    CoRaterRule co_rater_rule = CoRaterRule::RatedAny;

    std::size_t num_items() const { return mean.size(); }
};

ItemStats compute_item_stats(const RatingMatrix& m, std::span<const ItemId> selected,
                             CoRaterRule rule = CoRaterRule::RatedAny);

// Users in U_S under the given rule (sorted ids).
std::vector<UserId> selected_item_raters(const RatingMatrix& m, std::span<const ItemId> selected,
                                         CoRaterRule rule);

}  // namespace aush
