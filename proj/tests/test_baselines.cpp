#include <doctest.h>

#include <cmath>
#include <set>

#include "aush/baselines.hpp"
#include "helpers.hpp"

using namespace aush;

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Ratings for 30 users over 20 items; item 0 is rated 4 by everyone, item 19 by no one,
// popularity decreases with item id.
RatingMatrix toy() {
    std::vector<RatingTriple> e;
    for (UserId u = 0; u < 30; ++u)
        for (ItemId v = 0; v < 19; ++v) {
            if (v == 0) {
                e.push_back({u, v, 4.0});
            } else if (u % (v + 1) == 0) {
                e.push_back({u, v, double(1 + (u + v) % 5)});
            }
        }
    return testutil::make_dense_ids(30, 20, e);
}

AttackConfig config(std::size_t A, std::size_t F, std::vector<ItemId> S, ItemId target) {
    AttackConfig c;
    c.target = target;
    c.selected = std::move(S);
    c.attack_size = A;
    c.filler_size = F;
    c.profile_size = profile_size_for(F, c.selected.size());
    c.scale = RatingScale::movielens();
    return c;
}

void check_structure(const ProfileSet& ps, const AttackConfig& cfg) {
    REQUIRE(ps.size() == cfg.attack_size);
    for (const auto& row : ps.rows) {
        CHECK(row.size() == cfg.profile_size);
        std::set<ItemId> seen;
        bool has_target = false;
        for (const auto& [v, r] : row) {
            CHECK(seen.insert(v).second);
            CHECK(cfg.scale.on_grid(r));
            if (v == cfg.target) {
                has_target = true;
                CHECK(r == cfg.scale.max_rating);
            }
        }
        CHECK(has_target);
    }
    CHECK_NOTHROW(validate_profiles(ps, cfg));
}

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("zero stddev returns the snapped mean") {
    Rng rng(1);
    const auto s = RatingScale::movielens();
    CHECK(draw_rating(3.4, 0.0, s, rng) == 3.0);
    CHECK(draw_rating(3.6, 0.0, s, rng) == 4.0);
    CHECK(draw_rating(7.0, 0.0, s, rng) == 5.0);
    CHECK(draw_rating(-2.0, 0.0, s, rng) == 1.0);
}

TEST_CASE("discretized Gaussian mean matches Monte Carlo") {
    const auto s = RatingScale::movielens();
    for (auto [mu, sd] : {std::pair{3.2, 1.1}, std::pair{4.6, 0.7}, std::pair{1.3, 2.0}}) {
        double expect = 0;
        for (int k = 1; k <= 5; ++k) {
            const double lo = k == 1 ? 0.0 : normal_cdf((k - 0.5 - mu) / sd);
            const double hi = k == 5 ? 1.0 : normal_cdf((k + 0.5 - mu) / sd);
            expect += k * (hi - lo);
        }
        Rng rng(42);
        const int n = 200000;
        double sum = 0;
        for (int i = 0; i < n; ++i) sum += draw_rating(mu, sd, s, rng);
        // std of a 1..5 rating is at most 2, so 5 sigma of the mean is < 0.025
        CHECK(std::abs(sum / n - expect) < 0.025);
    }
}

TEST_CASE("every baseline produces well-formed rows") {
    auto m = toy();
    const std::vector<ItemId> S{3, 5};
    auto cfg = config(12, 8, S, 17);
    auto stats = compute_item_stats(m, S);
    for (auto kind : {BaselineKind::Random, BaselineKind::Average, BaselineKind::Segment, BaselineKind::Bandwagon}) {
        CAPTURE(to_string(kind));
        auto ps = gen_baseline_attack(kind, cfg, stats, 9);
        CHECK(ps.attack == to_string(kind));
        CHECK(ps.target == 17);
        auto expect = cfg;
        if (kind == BaselineKind::Bandwagon) expect.selected = most_popular_items(stats, 2, 17);
        check_structure(ps, expect);
    }
}

TEST_CASE("random and average attacks spend P - 1 ratings on fillers") {
    auto m = toy();
    auto cfg = config(5, 6, {3, 5}, 17);
    auto stats = compute_item_stats(m, cfg.selected);
    for (auto kind : {BaselineKind::Random, BaselineKind::Average}) {
        auto ps = gen_baseline_attack(kind, cfg, stats, 4);
        for (const auto& row : ps.rows) CHECK(row.size() == 9);
    }
}

TEST_CASE("average attack uses item means with fallback for unrated items") {
    auto m = toy();
    auto stats = compute_item_stats(m, {});
    CHECK(stats.mean[0] == 4.0);
    CHECK(stats.stddev[0] == 0.0);
    CHECK(stats.mean_fallback[19]);
    // P - 1 = 18 of 19 non-target items: item 0 and item 19 appear in almost every row
    auto cfg = config(20, 17, {}, 10);
    cfg.profile_size = 18;
    cfg.filler_size = 17;
    auto ps = gen_average_attack(cfg, stats, 3);
    std::size_t item0 = 0;
    for (const auto& row : ps.rows)
        for (const auto& [v, r] : row)
            if (v == 0) {
                ++item0;
                CHECK(r == 4.0);
            }
    CHECK(item0 > 0);
    REQUIRE(ps.flags.size() == 1);
    CHECK(ps.flags[0].find("global mean") != std::string::npos);
}

TEST_CASE("average-attack filler means follow the item means") {
    std::vector<RatingTriple> e;
    for (UserId u = 0; u < 40; ++u)
        for (ItemId v = 0; v < 6; ++v) e.push_back({u, v, double(1 + (u * (v + 1) + v) % 5)});
    auto m = testutil::make_dense_ids(40, 7, e);
    auto stats = compute_item_stats(m, {});
    auto cfg = config(10000, 2, {}, 6);
    auto ps = gen_average_attack(cfg, stats, 5);
    std::vector<double> sum(6, 0.0);
    std::vector<std::size_t> n(6, 0);
    for (const auto& row : ps.rows)
        for (const auto& [v, r] : row)
            if (v != 6) sum[v] += r, ++n[v];
    for (ItemId v = 0; v < 6; ++v) {
        // discretized Gaussian expectation around the item mean
        double expect = 0;
        for (int k = 1; k <= 5; ++k) {
            const double lo = k == 1 ? 0.0 : normal_cdf((k - 0.5 - stats.mean[v]) / stats.stddev[v]);
            const double hi = k == 5 ? 1.0 : normal_cdf((k + 0.5 - stats.mean[v]) / stats.stddev[v]);
            expect += k * (hi - lo);
        }
        CAPTURE(v);
        CHECK(std::abs(sum[v] / n[v] - expect) < 4 * 2.0 / std::sqrt(double(n[v])));
    }
}

TEST_CASE("segment attack rates only min and Q") {
    auto m = toy();
    auto cfg = config(10, 9, {2, 4, 6}, 15);
    auto ps = gen_segment_attack(cfg, compute_item_stats(m, cfg.selected), 8);
    check_structure(ps, cfg);
    for (const auto& row : ps.rows)
        for (const auto& [v, r] : row) {
            const bool boosted = v == 15 || v == 2 || v == 4 || v == 6;
            CHECK(r == (boosted ? 5.0 : 1.0));
        }
}

TEST_CASE("bandwagon selects the most popular items, ties to lower id") {
    ItemStats stats;
    stats.popularity = {5, 9, 9, 1, 9, 0};
    stats.mean.assign(6, 3.0);
    CHECK(most_popular_items(stats, 2, 5) == std::vector<ItemId>{1, 2});
    CHECK(most_popular_items(stats, 3, 2) == std::vector<ItemId>{1, 4, 0});
    CHECK_THROWS_AS(most_popular_items(stats, 6, 0), BudgetError);

    auto m = toy();
    auto cfg = config(4, 5, {7, 8}, 12);
    auto full = compute_item_stats(m, cfg.selected);
    auto ps = gen_bandwagon_attack(cfg, full, 2);
    // item 0 is rated by everyone, item 1 by every other user
    for (const auto& row : ps.rows) {
        int found = 0;
        for (const auto& [v, r] : row)
            if (v == 0 || v == 1) {
                ++found;
                CHECK(r == 5.0);
            }
        CHECK(found == 2);
    }
}

TEST_CASE("same seed, same profiles") {
    auto m = toy();
    auto cfg = config(6, 7, {3}, 11);
    auto stats = compute_item_stats(m, cfg.selected);
    for (auto kind : {BaselineKind::Random, BaselineKind::Average, BaselineKind::Segment, BaselineKind::Bandwagon}) {
        CHECK(gen_baseline_attack(kind, cfg, stats, 77) == gen_baseline_attack(kind, cfg, stats, 77));
        CHECK(gen_baseline_attack(kind, cfg, stats, 77).rows != gen_baseline_attack(kind, cfg, stats, 78).rows);
    }
}

TEST_CASE("budgets that do not fit are rejected") {
    auto m = toy();
    auto stats = compute_item_stats(m, {});
    Rng rng(0);
    const ItemId ex[] = {0, 1};
    CHECK(draw_filler_items(20, ex, 18, rng).size() == 18);
    CHECK_THROWS_AS(draw_filler_items(20, ex, 19, rng), BudgetError);
    auto cfg = config(3, 20, {}, 0);
    CHECK_THROWS_AS(gen_random_attack(cfg, stats, 1), ValidationError);
    auto bad = config(3, 5, {1}, 0);
    bad.profile_size = 8;
    CHECK_THROWS_WITH_AS(gen_segment_attack(bad, stats, 1), doctest::Contains("P = F + |S| + 1"), ValidationError);
}

TEST_CASE("kind names") {
    for (auto k : {BaselineKind::Random, BaselineKind::Average, BaselineKind::Segment, BaselineKind::Bandwagon})
        CHECK(parse_baseline_kind(to_string(k)) == k);
    CHECK_THROWS(parse_baseline_kind("love-hate"));
}

}  // TEST_SUITE
