#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aush/rating_matrix.hpp"

namespace aush {

/// Attack budget and knowledge: which item to push, the shared selected set
/// S, and how many ratings each fake profile carries (P = F + |S| + 1).
struct AttackConfig {
    ItemId target = 0;
    std::vector<ItemId> selected;
    std::size_t attack_size = 50;   // A
    std::size_t filler_size = 90;   // F
    std::size_t profile_size = 94;  // P
    RatingScale scale;
    bool push = true;

    double target_rating() const { return push ? scale.max_rating : scale.min_rating; }
    // Throws ValidationError naming the violated invariant.
    void validate(std::size_t num_items) const;
    // Stable description used for provenance hashes.
    std::string canonical() const;
    std::string hash() const;
};

// P derived from the other two budget terms.
inline std::size_t profile_size_for(std::size_t filler_size, std::size_t num_selected) {
    return filler_size + num_selected + 1;
}

using ProfileRow = std::vector<ItemRating>;  // sorted by item id

struct ProfileSet {
    std::vector<ProfileRow> rows;
    std::string attack;
    std::string config_hash;
    std::uint64_t seed = 0;
    ItemId target = 0;
    std::vector<std::string> flags;  // degenerate-case notes, e.g. fallbacks taken

    std::size_t size() const { return rows.size(); }
    bool operator==(const ProfileSet&) const = default;
};

// Builds one sorted row from fillers, selected-item ratings and the target.
// Throws ValidationError on overlapping items or off-grid ratings.
ProfileRow assemble_profile(std::span<const ItemRating> fillers, std::span<const ItemId> selected,
                            std::span<const double> selected_ratings, ItemId target, double target_rating,
                            const RatingScale& scale);

// Checks row count, nonzero counts, grid membership, and the target rating.
void validate_profiles(const ProfileSet& profiles, const AttackConfig& cfg);

// Appends the fake users to a copy of `train`, labelled fake_<i>.
RatingMatrix inject_profiles(const RatingMatrix& train, const ProfileSet& profiles);

// TSV rows `fake_user_id\titem\trating` (item labels from `items`) and a JSON
// sidecar at <path>.meta.json with attack name, seed, attack-budget hash and target;
// keys of `extra_meta_json` are merged in at the top level.
void export_profiles(const ProfileSet& profiles, const RatingMatrix& items, const std::string& path,
                     const std::string& extra_meta_json = "");
std::string format_profiles(const ProfileSet& profiles, const RatingMatrix& items);
ProfileSet load_profiles(const std::string& path, const RatingMatrix& items);

}  // namespace aush
