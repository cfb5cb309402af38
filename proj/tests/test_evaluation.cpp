#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>

#include "aush/evaluation.hpp"
#include "aush/random.hpp"
#include "helpers.hpp"

using namespace aush;

namespace {

class TableModel final : public VictimModel {
public:
    TableModel(std::size_t users, std::size_t items, std::vector<double> scores) : scores_(std::move(scores)) {
        num_users_ = users;
        num_items_ = items;
        scale_ = RatingScale::movielens();
    }
    std::string name() const override { return "table"; }
    double predict_raw(UserId u, ItemId v) const override { return scores_[u * num_items_ + v]; }
    Checkpoint checkpoint() const override { return {}; }

private:
    std::vector<double> scores_;
};

RatingMatrix toy() {
    return load_ratings(testutil::data_dir() + "/toy/ratings.tsv", DatasetFormat::TsvUirt, RatingScale::movielens());
}

ExperimentSetup toy_setup(const RatingMatrix& m, AttackKind kind) {
    ExperimentSetup s;
    s.train = &m;
    s.victim.kind = VictimKind::Nmf;
    s.victim.nmf.factors = 4;
    s.victim.nmf.max_epochs = 40;
    s.attack.kind = kind;
    s.attack.schedule.epochs = 10;
    s.attack.schedule.batch_size = 8;
    const auto targets = select_targets(m, TargetMode::LongTail, 1, 20, 3);
    s.config.target = targets[0];
    s.config.selected = choose_selected_items(m, s.config.target, 2, nullptr);
    s.config.attack_size = 8;
    s.config.filler_size = 6;
    s.config.profile_size = 9;
    s.config.scale = m.scale();
    s.k = 5;
    s.seeds = {11, 12, 13};
    return s;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("in-segment users rated every selected item highly") {
    // S = {0,1}: u0 (5,4) in, u1 (5,3) out, u2 (5,-) out, u3 (4,5) in
    auto m = testutil::make_dense_ids(4, 3, {{0, 0, 5}, {0, 1, 4}, {1, 0, 5}, {1, 1, 3}, {2, 0, 5}, {3, 0, 4}, {3, 1, 5}});
    const ItemId S[] = {0, 1};
    auto p = in_segment_users(m, S);
    CHECK(p.users == std::vector<UserId>{0, 3});
    CHECK(p.flags.empty());
    CHECK(high_rating_threshold(m.scale()) == 4.0);
    CHECK(high_rating_threshold(RatingScale::filmtrust()) == 3.5);

    auto e = in_segment_users(m, {});
    CHECK(e.users.size() == 4);
    CHECK(e.flags == std::vector<std::string>{"empty-selected-set"});

    const ItemId T[] = {2};
    auto none = in_segment_users(m, T);
    CHECK(none.users.empty());
    CHECK(none.flags == std::vector<std::string>{"empty-segment"});
}

TEST_CASE("prediction shift averages clipped differences") {
    TableModel b0(2, 1, {2.5, 3.0}), a0(2, 1, {4.0, 3.5});
    const UserId pair[] = {0, 1};
    CHECK(prediction_shift(b0, a0, 0, pair) == 1.0);
    CHECK(prediction_shift(b0, b0, 0, pair) == 0.0);
    TableModel before(2, 2, {2.0, 0, 3.0, 0});
    TableModel after(2, 2, {3.0, 0, 4.0, 0});
    const UserId both[] = {0, 1};
    CHECK(prediction_shift(before, after, 0, both) == 1.0);
    CHECK(prediction_shift(after, before, 0, both) == -1.0);
    // 4.5 -> 6.0 clips to 5.0
    TableModel b2(1, 1, {4.5}), a2(1, 1, {6.0});
    const UserId one[] = {0};
    CHECK(prediction_shift(b2, a2, 0, one) == 0.5);
    CHECK(prediction_shift(b2, a2, 0, {}) == 0.0);
}

TEST_CASE("hit ratio") {
    // 4 users, 3 items, target 2; only user 1 ranks it first at k = 1
    auto m = testutil::make_dense_ids(4, 3, {});
    TableModel model(4, 3, {5, 4, 3, 1, 2, 3, 5, 5, 4, 3, 1, 2});
    const UserId users[] = {0, 1, 2, 3};
    auto hr = hit_ratio_at_k(model, m, 2, 1, users);
    CHECK(hr.value == 0.25);
    CHECK(hr.evaluated == 4);
    CHECK(hr.excluded == 0);
    CHECK(hit_ratio_at_k(model, m, 2, 3, users).value == 1.0);

    {
        // 100 users; the target (item 1) leads the list of users 0..24
        std::vector<double> sc(200);
        for (std::size_t u = 0; u < 100; ++u) {
            sc[2 * u] = 3.0;
            sc[2 * u + 1] = u < 25 ? 4.0 : 2.0;
        }
        TableModel big(100, 2, sc);
        auto none = testutil::make_dense_ids(100, 2, {});
        std::vector<UserId> everyone(100);
        std::iota(everyone.begin(), everyone.end(), 0);
        CHECK(hit_ratio_at_k(big, none, 1, 1, everyone).value == 0.25);
    }

    // users who rated the target are excluded
    auto rated = testutil::make_dense_ids(4, 3, {{1, 2, 3}});
    auto hr2 = hit_ratio_at_k(model, rated, 2, 1, users);
    CHECK(hr2.value == 0.0);
    CHECK(hr2.evaluated == 3);
    CHECK(hr2.excluded == 1);

    auto all = testutil::make_dense_ids(4, 3, {{0, 2, 3}, {1, 2, 3}, {2, 2, 3}, {3, 2, 3}});
    auto hr3 = hit_ratio_at_k(model, all, 2, 1, users);
    CHECK(hr3.value == 0.0);
    CHECK(hr3.evaluated == 0);
    CHECK(std::find(hr3.flags.begin(), hr3.flags.end(), "empty-population") != hr3.flags.end());
}

TEST_CASE("target selection") {
    // item v has v+1 ratings
    std::vector<RatingTriple> e;
    for (ItemId v = 0; v < 6; ++v)
        for (UserId u = 0; u <= v; ++u) e.push_back({u, v, 3});
    auto m = testutil::make_dense_ids(6, 6, e);
    auto t = select_targets(m, TargetMode::LongTail, 2, 2, 1);
    std::sort(t.begin(), t.end());
    CHECK(t == std::vector<ItemId>{0, 1});
    CHECK_THROWS_AS(select_targets(m, TargetMode::LongTail, 3, 2, 1), ValidationError);
    // a threshold at the maximum popularity admits every item
    auto all = select_targets(m, TargetMode::LongTail, 6, 6, 1);
    std::sort(all.begin(), all.end());
    CHECK(all == std::vector<ItemId>{0, 1, 2, 3, 4, 5});
    CHECK(select_targets(m, TargetMode::Random, 3, 0, 9) == select_targets(m, TargetMode::Random, 3, 0, 9));
    CHECK(parse_target_mode("long-tail") == TargetMode::LongTail);
    CHECK(to_string(TargetMode::Random) == "random");
}

TEST_CASE("selected items share the target's categories") {
    std::vector<RatingTriple> e;
    for (ItemId v = 0; v < 6; ++v)
        for (UserId u = 0; u <= v; ++u) e.push_back({u, v, 3});
    auto m = testutil::make_dense_ids(6, 6, e);
    ItemCategories cats{{"i0", {"drama"}}, {"i1", {"drama", "war"}}, {"i2", {"comedy"}},
                        {"i3", {"war"}},   {"i4", {"comedy"}},       {"i5", {"horror"}}};
    CHECK(choose_selected_items(m, 0, 2, &cats) == std::vector<ItemId>{1, 5});
    CHECK(choose_selected_items(m, 1, 2, &cats) == std::vector<ItemId>{3, 0});
    CHECK(choose_selected_items(m, 2, 1, nullptr) == std::vector<ItemId>{5});

    auto dir = std::filesystem::temp_directory_path() / "aush_cat_test";
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "c.tsv") << "1\tAction|Drama\n2\tComedy\n";
    auto loaded = load_item_categories((dir / "c.tsv").string());
    CHECK(loaded.at("1") == std::vector<std::string>{"Action", "Drama"});
    CHECK(loaded.at("2") == std::vector<std::string>{"Comedy"});
}

TEST_CASE("the null attack shifts nothing") {
    auto m = toy();
    auto s = toy_setup(m, AttackKind::None);
    auto r = run_experiment(s);
    CHECK(r.attack_size == 0);
    CHECK(r.all_users.prediction_shift == 0.0);
    CHECK(r.in_segment.prediction_shift == 0.0);
    CHECK(r.all_users.hr_before == r.all_users.hr_after);
}

TEST_CASE("segment attack favours the segment") {
    // S = {0,1} is rated by everyone: users 0..14 love it, the rest dislike it;
    // the other items carry unstructured mid ratings
    std::vector<RatingTriple> e;
    Rng rng(17);
    std::uniform_int_distribution<int> mid(2, 4);
    for (UserId u = 0; u < 40; ++u) {
        const bool fan = u < 15;
        e.push_back({u, 0, fan ? 5.0 : 1.0});
        e.push_back({u, 1, fan ? 4.0 : 2.0});
        for (ItemId v = 2; v < 29; ++v)
            if (rng() % 2) e.push_back({u, v, double(mid(rng))});
    }
    auto m = testutil::make_dense_ids(40, 30, e);
    ExperimentSetup s;
    s.train = &m;
    s.victim.nmf.factors = 4;
    s.victim.nmf.max_epochs = 400;
    s.victim.nmf.learning_rate = 0.02;
    s.attack.kind = AttackKind::Segment;
    s.config.target = 29;
    s.config.selected = {0, 1};
    s.config.attack_size = 10;
    s.config.filler_size = 6;
    s.config.profile_size = 9;
    s.config.scale = m.scale();
    s.k = 5;
    ExperimentArtifacts art;
    auto r = run_experiment(s, &art);
    CHECK(r.all_users.prediction_shift > 0.0);
    CHECK(r.in_segment.users > 0);
    CHECK(r.in_segment.prediction_shift >= r.all_users.prediction_shift);
    CHECK(art.attacked_model->num_users() == m.num_users() + 10);
    CHECK(art.profiles.size() == 10);
}

TEST_CASE("report echoes budgets and round-trips through JSON") {
    // 60 users x 100 items so that P = 90 + 3 + 1 fits
    std::vector<RatingTriple> e;
    for (UserId u = 0; u < 60; ++u)
        for (ItemId v = 0; v < 100; ++v)
            if ((u * 31 + v * 17) % 3 == 0) e.push_back({u, v, double(1 + (u + v) % 5)});
    auto m = testutil::make_dense_ids(60, 100, e);
    ExperimentSetup s;
    s.train = &m;
    s.victim.nmf.factors = 2;
    s.victim.nmf.max_epochs = 5;
    s.attack.kind = AttackKind::Segment;
    s.config.target = 99;
    s.config.selected = {0, 1, 2};
    s.config.attack_size = 4;
    s.config.filler_size = 90;
    s.config.profile_size = 94;
    s.config.scale = m.scale();
    s.score_detection = true;
    auto r = run_experiment(s);
    CHECK(r.profile_size == 94);
    CHECK(r.filler_size == 90);
    CHECK(r.attack_size == 4);
    CHECK(r.selected_labels.size() == 3);
    CHECK(r.victim == "nmf");
    CHECK(r.attack == "segment");
    REQUIRE(r.detection.has_value());
    CHECK(r.detection->fake_profiles == 4);
    CHECK(r.settings.at("population") == "clean-users-without-target-rating");

    const auto text = report_to_json(r);
    auto back = report_from_json(text);
    CHECK(report_to_json(back) == text);
    CHECK(back.all_users.prediction_shift == r.all_users.prediction_shift);
    CHECK(back.detection->tvd == r.detection->tvd);
    CHECK(back.seeds.victim == r.seeds.victim);

    s.config.profile_size = 95;
    CHECK_THROWS_WITH_AS(run_experiment(s), doctest::Contains("P = F + |S| + 1"), ValidationError);
}

TEST_CASE("summaries report per-target mean and pooled shift") {
    AttackReport a, b;
    a.attack = b.attack = "aush";
    a.victim = b.victim = "nmf";
    a.all_users = {1.0, 0.0, 0.5, 10};
    b.all_users = {0.0, 0.0, 0.1, 30};
    a.in_segment = {2.0, 0.0, 1.0, 1};
    b.in_segment = {1.0, 0.0, 0.0, 3};
    const AttackReport rs[] = {a, b};
    auto s = summarize(rs, "long-tail");
    CHECK(s.targets == 2);
    CHECK(s.all_users_mean.prediction_shift == 0.5);
    CHECK(s.all_users_pooled_ps == 0.25);
    CHECK(s.in_segment_mean.prediction_shift == 1.5);
    CHECK(s.in_segment_pooled_ps == 1.25);
    CHECK(s.all_users_mean.hr_after == doctest::Approx(0.3));

    auto csv = summary_csv_rows(s);
    CHECK(summary_csv_header() == "attack,victim,target_class,population,metric,value\n");
    CHECK(csv.find("aush,nmf,long-tail,all,ps_pooled,0.25") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 8);
}

TEST_CASE("attack kind names") {
    for (auto k : {AttackKind::Aush, AttackKind::Random, AttackKind::Average, AttackKind::Segment,
                   AttackKind::Bandwagon, AttackKind::None})
        CHECK(parse_attack_kind(to_string(k)) == k);
    CHECK_THROWS(parse_attack_kind("perturbation"));
}

}  // TEST_SUITE
