#include <doctest.h>

#include <cmath>

#include "aush/detection.hpp"
#include "aush/random.hpp"
#include "helpers.hpp"

using namespace aush;

namespace {

const double LOG2 = std::log(2.0);

std::vector<UserId> all_users(const RatingMatrix& m) {
    std::vector<UserId> u(m.num_users());
    for (UserId i = 0; i < u.size(); ++i) u[i] = i;
    return u;
}

ProfileSet fakes(std::vector<ProfileRow> rows, ItemId target) {
    ProfileSet ps;
    ps.rows = std::move(rows);
    ps.target = target;
    ps.attack = "test";
    return ps;
}

}  // namespace

TEST_SUITE("detection") {

TEST_CASE("histograms count unrated as level 0") {
    // u0: i0=5, i1=3; u1: i0=5, i2=1
    auto m = testutil::make_dense_ids(2, 3, {{0, 0, 5}, {0, 1, 3}, {1, 0, 5}, {1, 2, 1}});
    auto d = rating_distribution(m, all_users(m));
    CHECK(d.levels == 6);
    CHECK(d.num_items() == 3);
    using V = std::vector<double>;
    auto row = [&](ItemId v) { return V(d.item(v).begin(), d.item(v).end()); };
    CHECK(row(0) == V{0, 0, 0, 0, 0, 1});
    CHECK(row(1) == V{0.5, 0, 0, 0.5, 0, 0});
    CHECK(row(2) == V{0.5, 0.5, 0, 0, 0, 0});

    const UserId just_u0[] = {0};
    auto d0 = rating_distribution(m, just_u0);
    CHECK(d0.item(2)[0] == 1.0);

    // half-step scale: 8 levels + unrated
    auto ft = testutil::make_dense_ids(1, 1, {{0, 0, 2.5}}, RatingScale::filmtrust());
    auto df = rating_distribution(ft, all_users(ft));
    CHECK(df.levels == 9);
    CHECK(df.item(0)[5] == 1.0);
}

TEST_CASE("identical distributions are at distance zero") {
    auto m = testutil::make_dense_ids(3, 4, {{0, 0, 5}, {0, 1, 3}, {1, 0, 2}, {2, 3, 4}});
    auto d = rating_distribution(m, all_users(m));
    CHECK(tvd(d, d) == 0.0);
    CHECK(js(d, d) == 0.0);
}

TEST_CASE("disjoint single-item supports hit the maxima") {
    auto real = testutil::make_dense_ids(2, 1, {{0, 0, 5}, {1, 0, 5}});
    auto p = rating_distribution(real, all_users(real));
    auto q = rating_distribution(fakes({{{0, 1.0}}, {{0, 1.0}}}, 0), 1, real.scale());
    CHECK(tvd(p, q) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(js(p, q) == doctest::Approx(2 * LOG2).epsilon(1e-12));
    CHECK(tvd(p, q, DistanceConvention::Halved) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(js(p, q, DistanceConvention::Halved) == doctest::Approx(LOG2).epsilon(1e-12));
}

TEST_CASE("three-item hand computation") {
    auto real = testutil::make_dense_ids(2, 3, {{0, 0, 5}, {0, 1, 3}, {1, 0, 5}, {1, 2, 1}});
    // target item 0 rated 5 by both fakes
    auto ps = fakes({{{0, 5.0}, {1, 3.0}, {2, 1.0}}, {{0, 5.0}, {1, 4.0}}}, 0);
    auto s = detection_scores(real, ps);
    // only item 1 differs: p=(.5,0,0,.5,0,0), q=(0,0,0,.5,.5,0)
    CHECK(s.tvd == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(s.js == doctest::Approx(LOG2 / 3.0).epsilon(1e-12));
    CHECK(s.real_users == 2);
    CHECK(s.fake_profiles == 2);

    // without the target, item 0 becomes all-unrated on the fake side
    auto t = detection_scores(real, ps, false);
    CHECK(t.tvd == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(t.js == doctest::Approx(LOG2).epsilon(1e-12));
    CHECK_FALSE(t.include_target);

    auto h = detection_scores(real, ps, true, DistanceConvention::Halved);
    CHECK(h.tvd == doctest::Approx(s.tvd / 2).epsilon(1e-12));
    CHECK(h.js == doctest::Approx(s.js / 2).epsilon(1e-12));
}

TEST_CASE("distances are symmetric and bounded") {
    Rng rng(5);
    std::uniform_int_distribution<int> r(0, 5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<RatingTriple> a, b;
        for (UserId u = 0; u < 6; ++u)
            for (ItemId v = 0; v < 5; ++v) {
                if (int x = r(rng)) a.push_back({u, v, double(x)});
                if (int x = r(rng)) b.push_back({u, v, double(x)});
            }
        auto ma = testutil::make_dense_ids(6, 5, a);
        auto mb = testutil::make_dense_ids(6, 5, b);
        auto p = rating_distribution(ma, all_users(ma));
        auto q = rating_distribution(mb, all_users(mb));
        CHECK(tvd(p, q) == doctest::Approx(tvd(q, p)).epsilon(1e-14));
        CHECK(js(p, q) == doctest::Approx(js(q, p)).epsilon(1e-14));
        CHECK(tvd(p, q) <= 2.0);
        CHECK(js(p, q) <= 2 * LOG2 + 1e-12);
        CHECK(js(p, q) >= 0.0);
    }
}

TEST_CASE("shape mismatches are rejected") {
    auto a = testutil::make_dense_ids(1, 2, {{0, 0, 5}});
    auto b = testutil::make_dense_ids(1, 3, {{0, 0, 5}});
    auto p = rating_distribution(a, all_users(a));
    auto q = rating_distribution(b, all_users(b));
    CHECK_THROWS(tvd(p, q));
    CHECK_THROWS(js(p, q));
    CHECK_THROWS(rating_distribution(fakes({}, 0), 2, RatingScale::movielens()));
}

TEST_CASE("csv output") {
    DetectionScores s;
    s.tvd = 0.25;
    s.js = 0.125;
    CHECK(detection_csv_header() == "attack,dataset,tvd,js\n");
    CHECK(detection_csv_row("aush", "ml-100k", s) == "aush,ml-100k,0.25,0.125\n");
}

}  // TEST_SUITE
