#pragma once

#include <span>
#include <string>
#include <vector>

#include "aush/profile.hpp"
#include "aush/rating_matrix.hpp"

namespace aush {

/// Per-item histograms over rating levels {0 (unrated), min, ..., Q},
/// normalized by population size.
struct RatingDistribution {
    std::size_t levels = 0;      // number of rating levels + 1
    std::vector<double> values;  // items x levels, row-major

    std::size_t num_items() const { return levels == 0 ? 0 : values.size() / levels; }
    std::span<const double> item(ItemId v) const { return {values.data() + v * levels, levels}; }
};

// Population = the given users of m.
RatingDistribution rating_distribution(const RatingMatrix& m, std::span<const UserId> users);
// Population = the fake profiles. `include_target` false drops the target
// item's forced rating (it then counts as unrated).
RatingDistribution rating_distribution(const ProfileSet& profiles, std::size_t num_items, const RatingScale& scale,
                                       bool include_target = true);

enum class DistanceConvention {
    Unhalved,  // Σ_v ||p - q||_1 / |V| and Σ_v [KL(p||m) + KL(q||m)] / |V|
    Halved,    // the textbook TVD and JSD, each half of the above
};

double tvd(const RatingDistribution& real, const RatingDistribution& fake,
           DistanceConvention conv = DistanceConvention::Unhalved);
double js(const RatingDistribution& real, const RatingDistribution& fake,
          DistanceConvention conv = DistanceConvention::Unhalved);

struct DetectionScores {
    double tvd = 0.0;
    double js = 0.0;
    std::size_t real_users = 0;
    std::size_t fake_profiles = 0;
    bool include_target = true;
    DistanceConvention convention = DistanceConvention::Unhalved;
};

// Scores a fake population against all users of `real`.
DetectionScores detection_scores(const RatingMatrix& real, const ProfileSet& fake, bool include_target = true,
                                 DistanceConvention conv = DistanceConvention::Unhalved);

// CSV: attack,dataset,tvd,js
std::string detection_csv_header();
std::string detection_csv_row(const std::string& attack, const std::string& dataset, const DetectionScores& s);

}  // namespace aush
