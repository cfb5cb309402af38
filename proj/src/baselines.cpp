#include "aush/baselines.hpp"

#include <algorithm>
#include <numeric>

namespace aush {

double draw_rating(double mean, double stddev, const RatingScale& scale, Rng& rng) {
    if (stddev <= 0.0) return scale.snap(mean);
    std::normal_distribution<double> dist(mean, stddev);
    return scale.snap(dist(rng));
}

std::vector<ItemId> draw_filler_items(std::size_t num_items, std::span<const ItemId> excluded, std::size_t count,
                                      Rng& rng) {
    std::vector<char> banned(num_items, 0);
    for (ItemId v : excluded)
        if (v < num_items) banned[v] = 1;
    std::vector<ItemId> pool;
    pool.reserve(num_items);
    for (ItemId v = 0; v < num_items; ++v)
        if (!banned[v]) pool.push_back(v);
    if (count > pool.size())
        throw BudgetError("filler size " + std::to_string(count) + " exceeds the " + std::to_string(pool.size()) +
                          " available items");
    auto picks = sample_without_replacement(pool.size(), count, rng);
    std::vector<ItemId> out;
    out.reserve(count);
    for (auto i : picks) out.push_back(pool[i]);
    return out;
}

std::vector<ItemId> most_popular_items(const ItemStats& stats, std::size_t count, ItemId exclude) {
    std::vector<ItemId> items;
    for (ItemId v = 0; v < stats.num_items(); ++v)
        if (v != exclude) items.push_back(v);
    if (count > items.size()) throw BudgetError("not enough items for the requested popular set");
    std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(count), items.end(),
                      [&](ItemId a, ItemId b) {
                          return stats.popularity[a] != stats.popularity[b] ? stats.popularity[a] > stats.popularity[b]
                                                                            : a < b;
                      });
    items.resize(count);
    return items;
}

namespace {

ProfileSet start_set(const char* name, const AttackConfig& cfg, std::uint64_t seed) {
    ProfileSet ps;
    ps.attack = name;
    ps.config_hash = cfg.hash();
    ps.seed = seed;
    ps.target = cfg.target;
    ps.rows.reserve(cfg.attack_size);
    return ps;
}

std::vector<ItemId> with_target(std::span<const ItemId> s, ItemId target) {
    std::vector<ItemId> out(s.begin(), s.end());
    out.push_back(target);
    return out;
}

// Shared body of the random and average attacks: P - 1 Gaussian-rated fillers.
template <class MeanStd>
ProfileSet gaussian_filler_attack(const char* name, const AttackConfig& cfg, const ItemStats& stats,
                                  std::uint64_t seed, MeanStd&& mean_std) {
    cfg.validate(stats.num_items());
    Rng rng(seed);
    ProfileSet ps = start_set(name, cfg, seed);
    const ItemId target[] = {cfg.target};
    const std::size_t budget = cfg.profile_size - 1;
    for (std::size_t a = 0; a < cfg.attack_size; ++a) {
        auto items = draw_filler_items(stats.num_items(), target, budget, rng);
        std::vector<ItemRating> fillers;
        fillers.reserve(items.size());
        for (ItemId v : items) {
            auto [mu, sd] = mean_std(v);
            fillers.push_back({v, draw_rating(mu, sd, cfg.scale, rng)});
        }
        ps.rows.push_back(assemble_profile(fillers, {}, {}, cfg.target, cfg.target_rating(), cfg.scale));
    }
    return ps;
}

}  // namespace

ProfileSet gen_random_attack(const AttackConfig& cfg, const ItemStats& stats, std::uint64_t seed) {
    return gaussian_filler_attack("random", cfg, stats, seed, [&](ItemId) {
        return std::pair{stats.global_mean, stats.global_stddev};
    });
}

ProfileSet gen_average_attack(const AttackConfig& cfg, const ItemStats& stats, std::uint64_t seed) {
    std::size_t fallbacks = 0;
    auto ps = gaussian_filler_attack("average", cfg, stats, seed, [&](ItemId v) {
        if (stats.mean_fallback[v]) ++fallbacks;
        return std::pair{stats.mean[v], stats.stddev[v]};
    });
    if (fallbacks > 0)
        ps.flags.push_back("average: " + std::to_string(fallbacks) +
                           " filler draws used global mean/std for unrated items");
    return ps;
}

ProfileRow segment_profile(const AttackConfig& cfg, std::span<const ItemId> filler_items) {
    std::vector<ItemRating> fillers;
    fillers.reserve(filler_items.size());
    for (ItemId v : filler_items) fillers.push_back({v, cfg.scale.min_rating});
    std::vector<double> s_ratings(cfg.selected.size(), cfg.scale.max_rating);
    return assemble_profile(fillers, cfg.selected, s_ratings, cfg.target, cfg.target_rating(), cfg.scale);
}

ProfileSet gen_segment_attack(const AttackConfig& cfg, const ItemStats& stats, std::uint64_t seed) {
    cfg.validate(stats.num_items());
    Rng rng(seed);
    ProfileSet ps = start_set("segment", cfg, seed);
    const auto excluded = with_target(cfg.selected, cfg.target);
    for (std::size_t a = 0; a < cfg.attack_size; ++a) {
        auto items = draw_filler_items(stats.num_items(), excluded, cfg.filler_size, rng);
        ps.rows.push_back(segment_profile(cfg, items));
    }
    return ps;
}

ProfileSet gen_bandwagon_attack(const AttackConfig& cfg, const ItemStats& stats, std::uint64_t seed) {
    AttackConfig bw = cfg;
    bw.selected = most_popular_items(stats, cfg.selected.size(), cfg.target);
    bw.validate(stats.num_items());
    Rng rng(seed);
    ProfileSet ps = start_set("bandwagon", bw, seed);
    const auto excluded = with_target(bw.selected, bw.target);
    const std::vector<double> s_ratings(bw.selected.size(), bw.scale.max_rating);
    for (std::size_t a = 0; a < bw.attack_size; ++a) {
        auto items = draw_filler_items(stats.num_items(), excluded, bw.filler_size, rng);
        std::vector<ItemRating> fillers;
        fillers.reserve(items.size());
        for (ItemId v : items) fillers.push_back({v, draw_rating(stats.global_mean, stats.global_stddev, bw.scale, rng)});
        ps.rows.push_back(assemble_profile(fillers, bw.selected, s_ratings, bw.target, bw.target_rating(), bw.scale));
    }
    return ps;
}

std::string to_string(BaselineKind k) {
    switch (k) {
        case BaselineKind::Random: return "random";
        case BaselineKind::Average: return "average";
        case BaselineKind::Segment: return "segment";
        case BaselineKind::Bandwagon: return "bandwagon";
    }
    return "?";
}

BaselineKind parse_baseline_kind(const std::string& s) {
    if (s == "random") return BaselineKind::Random;
    if (s == "average") return BaselineKind::Average;
    if (s == "segment") return BaselineKind::Segment;
    if (s == "bandwagon") return BaselineKind::Bandwagon;
    throw std::invalid_argument("unknown baseline attack '" + s + "'");
}

ProfileSet gen_baseline_attack(BaselineKind kind, const AttackConfig& cfg, const ItemStats& stats,
                               std::uint64_t seed) {
    switch (kind) {
        case BaselineKind::Random: return gen_random_attack(cfg, stats, seed);
        case BaselineKind::Average: return gen_average_attack(cfg, stats, seed);
        case BaselineKind::Segment: return gen_segment_attack(cfg, stats, seed);
        case BaselineKind::Bandwagon: return gen_bandwagon_attack(cfg, stats, seed);
    }
    throw std::invalid_argument("gen_baseline_attack: bad kind");
}

}  // namespace aush
