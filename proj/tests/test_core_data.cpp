#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "aush/item_stats.hpp"
#include "helpers.hpp"

using namespace aush;
using testutil::make_matrix;

TEST_SUITE("core-data") {

TEST_CASE("rating scale grid") {
    auto ml = RatingScale::movielens();
    CHECK(ml.num_levels() == 5);
    CHECK(ml.on_grid(3.0));
    CHECK_FALSE(ml.on_grid(3.5));
    CHECK(ml.snap(3.4) == 3.0);
    CHECK(ml.snap(7.0) == 5.0);
    CHECK(ml.snap(-2.0) == 1.0);

    auto ft = RatingScale::filmtrust();
    CHECK(ft.num_levels() == 8);
    CHECK(ft.on_grid(3.5));
    CHECK(ft.level_index(0.5) == 0);
    CHECK(ft.level_value(7) == 4.0);
    CHECK_THROWS_AS(RatingScale(5.0, 1.0, 1.0).validate(), ValidationError);
    CHECK_THROWS_AS(RatingScale(1.0, 5.0, 1.5).validate(), ValidationError);
}

TEST_CASE("three-line toy file") {
    auto m = parse_ratings("u1\ti1\t5\nu1\ti2\t3\nu2\ti1\t4\n", DatasetFormat::TsvUirt, RatingScale::movielens());
    CHECK(m.num_users() == 2);
    CHECK(m.num_items() == 2);
    CHECK(m.num_ratings() == 3);
    CHECK(m.rating(0, 1) == 3.0);
    CHECK(m.rating(1, 1) == 0.0);
    CHECK_FALSE(m.has_rating(1, 1));
    // indices are inverses
    CHECK(m.item_ratings(0).size() == 2);
    CHECK(m.user_ratings(0).size() == 2);
}

TEST_CASE("empty file gives an empty matrix") {
    auto m = parse_ratings("", DatasetFormat::TsvUirt, RatingScale::movielens());
    CHECK(m.num_users() == 0);
    CHECK(m.num_items() == 0);
    CHECK(m.num_ratings() == 0);
}

TEST_CASE("timestamps are parsed and dropped; csv format") {
    auto a = parse_ratings("1\t10\t4\t881250949\n", DatasetFormat::TsvUirt, RatingScale::movielens());
    auto b = parse_ratings("1,10,4\n", DatasetFormat::CsvUir, RatingScale::movielens());
    CHECK(a.same_contents(b));
    CHECK(parse_dataset_format("csv-uir") == DatasetFormat::CsvUir);
    CHECK_THROWS_AS(parse_dataset_format("xml"), ValidationError);
}

TEST_CASE("parse errors carry line numbers") {
    try {
        parse_ratings("u1\ti1\t5\nu2\ti1\n", DatasetFormat::TsvUirt, RatingScale::movielens(), "toy");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
        CHECK(std::string(e.what()).find("toy") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_ratings("u1\ti1\tfive\n", DatasetFormat::TsvUirt, RatingScale::movielens()), ParseError);
    CHECK_THROWS_AS(parse_ratings("u1\ti1\t3.5\n", DatasetFormat::TsvUirt, RatingScale::movielens()),
                    ValidationError);
    CHECK_THROWS_AS(parse_ratings("u1\ti1\t3\nu1\ti1\t4\n", DatasetFormat::TsvUirt, RatingScale::movielens()),
                    ValidationError);
}

TEST_CASE("ML-100K loads with the published counts") {
    auto m = load_ratings(testutil::data_dir() + "/ml-100k/u.data", DatasetFormat::TsvUirt, RatingScale::movielens());
    CHECK(m.num_users() == 943);
    CHECK(m.num_items() == 1682);
    CHECK(m.num_ratings() == 100000);
}

TEST_CASE("export then load round-trips") {
    auto m = make_matrix({{"a", "x", 5}, {"b", "y", 2}, {"a", "z", 3}, {"c", "x", 1}});
    auto text = format_ratings(m);
    auto back = parse_ratings(text, DatasetFormat::TsvUirt, m.scale());
    CHECK(back.same_contents(m));
    CHECK(format_ratings(back) == text);

    auto half = make_matrix({{"a", "x", 1.5}, {"b", "y", 4}}, RatingScale::filmtrust());
    auto back2 = parse_ratings(format_ratings(half), DatasetFormat::TsvUirt, RatingScale::filmtrust());
    CHECK(back2.same_contents(half));
}

TEST_CASE("label universe keeps ids and unrated items") {
    auto m = testutil::make_dense_ids(3, 4, {{0, 2, 5}, {2, 0, 1}});
    LabelUniverse u{m.user_labels(), m.item_labels()};
    auto back = parse_ratings(format_ratings(m), DatasetFormat::TsvUirt, m.scale(), "mem", &u);
    CHECK(back.num_users() == 3);
    CHECK(back.num_items() == 4);
    CHECK(back.rating(0, 2) == 5.0);
    CHECK(back.rating(2, 0) == 1.0);
    CHECK_THROWS_AS(parse_ratings("zz\ti0\t3\n", DatasetFormat::TsvUirt, m.scale(), "mem", &u), ParseError);
}

TEST_CASE("filter_dataset") {
    // users with 2, 5 and 20 ratings
    std::vector<std::tuple<std::string, std::string, double>> rows;
    for (int i = 0; i < 2; ++i) rows.push_back({"a", "i" + std::to_string(i), 3});
    for (int i = 0; i < 5; ++i) rows.push_back({"b", "j" + std::to_string(i), 4});
    for (int i = 0; i < 20; ++i) rows.push_back({"c", "i" + std::to_string(i), 5});
    auto m = make_matrix(rows);
    auto f = filter_dataset(m, 15);
    CHECK(f.num_users() == 1);
    CHECK(f.user_label(0) == "c");
    CHECK(f.num_items() == 20);  // the j* items only b rated are gone
    CHECK(filter_dataset(f, 15).same_contents(f));
    CHECK_THROWS_AS(filter_dataset(m, 50), EmptyDatasetError);

    // min=0 only drops items nobody rated
    auto sparse = testutil::make_dense_ids(2, 3, {{0, 0, 4}, {1, 2, 2}});
    auto g = filter_dataset(sparse, 0);
    CHECK(g.num_items() == 2);
    CHECK(g.num_ratings() == 2);
}

TEST_CASE("filter_dataset iterates to a fixed point") {
    // dropping user b orphans item y, which then leaves user c short
    auto m = make_matrix({{"a", "x", 1}, {"a", "z", 1}, {"b", "y", 1}, {"c", "y", 1}, {"c", "x", 1}});
    auto f = filter_dataset(m, 2);
    for (UserId u = 0; u < f.num_users(); ++u) CHECK(f.user_ratings(u).size() >= 2);
    CHECK(filter_dataset(f, 2).same_contents(f));
}

TEST_CASE("split_ratings partitions and is seed-deterministic") {
    std::vector<RatingTriple> entries;
    std::mt19937_64 rng(5);
    std::set<std::pair<UserId, ItemId>> seen;
    while (entries.size() < 28799) {
        UserId u = rng() % 500;
        ItemId v = rng() % 400;
        if (seen.insert({u, v}).second) entries.push_back({u, v, double(1 + rng() % 5)});
    }
    auto m = testutil::make_dense_ids(500, 400, entries);
    auto s = split_ratings(m, 0.1, 42);
    CHECK(s.test.num_ratings() == 2880);
    CHECK(s.train.num_ratings() + s.test.num_ratings() == m.num_ratings());
    for (const auto& t : s.test.triples()) CHECK_FALSE(s.train.has_rating(t.user, t.item));
    auto again = split_ratings(m, 0.1, 42);
    CHECK(format_ratings(again.test) == format_ratings(s.test));
    auto other = split_ratings(m, 0.1, 43);
    CHECK(format_ratings(other.test) != format_ratings(s.test));

    auto none = split_ratings(m, 0.0, 1);
    CHECK(none.test.num_ratings() == 0);
    CHECK(none.train.same_contents(m));
}

TEST_CASE("split_by_file") {
    auto m = make_matrix({{"1", "a", 5}, {"1", "b", 3}, {"2", "a", 4}});
    auto path = (std::filesystem::temp_directory_path() / "aush_split_test.tsv").string();
    {
        std::ofstream out(path);
        out << "1\tb\t3\t0\n";
    }
    auto s = split_by_file(m, path, DatasetFormat::TsvUirt);
    CHECK(s.test.num_ratings() == 1);
    CHECK(s.train.num_ratings() == 2);
    CHECK(s.test.rating(0, 1) == 3.0);
    std::filesystem::remove(path);
}

TEST_CASE("item stats basic examples") {
    auto m = make_matrix({{"a", "v", 4}, {"b", "v", 5}, {"a", "w", 1}});
    const ItemId sel[] = {1};
    auto st = compute_item_stats(m, sel);
    CHECK(st.mean[0] == doctest::Approx(4.5));
    CHECK(st.popularity[0] == 2);
    CHECK(st.stddev[0] == doctest::Approx(0.5));
    // S = {v}: co-raters of v equal its popularity
    const ItemId self[] = {0};
    auto st2 = compute_item_stats(m, self);
    CHECK(st2.co_raters[0] == st2.popularity[0]);
}

TEST_CASE("unrated item falls back to the global statistics") {
    auto m = testutil::make_dense_ids(2, 3, {{0, 0, 4}, {1, 0, 2}, {1, 1, 3}});
    auto st = compute_item_stats(m, {});
    CHECK(st.mean_fallback[2] == 1);
    CHECK(st.mean_fallback[0] == 0);
    CHECK(st.mean[2] == doctest::Approx(3.0));
    CHECK(st.global_mean == doctest::Approx(3.0));
    CHECK(st.global_stddev == doctest::Approx(std::sqrt(2.0 / 3.0)));
}

TEST_CASE("item stats match a brute-force scan") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t U = 2 + rng() % 9, V = 2 + rng() % 8;
        std::vector<RatingTriple> e;
        for (UserId u = 0; u < U; ++u)
            for (ItemId v = 0; v < V; ++v)
                if (rng() % 2) e.push_back({u, v, double(1 + rng() % 5)});
        if (e.empty()) continue;
        auto m = testutil::make_dense_ids(U, V, e);
        std::vector<ItemId> S{ItemId(rng() % V)};
        if (V > 2) S.push_back(ItemId((S[0] + 1) % V));
        for (auto rule : {CoRaterRule::RatedAny, CoRaterRule::RatedAll}) {
            auto st = compute_item_stats(m, S, rule);
            // U_S by enumeration
            std::set<UserId> us;
            for (UserId u = 0; u < U; ++u) {
                std::size_t hit = 0;
                for (auto s : S) hit += m.has_rating(u, s);
                if (rule == CoRaterRule::RatedAny ? hit > 0 : hit == S.size()) us.insert(u);
            }
            double gsum = 0;
            for (const auto& t : e) gsum += t.rating;
            for (ItemId v = 0; v < V; ++v) {
                std::size_t pop = 0, co = 0;
                double sum = 0;
                for (const auto& t : e) {
                    if (t.item != v) continue;
                    ++pop;
                    sum += t.rating;
                    co += us.count(t.user);
                }
                CHECK(st.popularity[v] == pop);
                CHECK(st.co_raters[v] == co);
                CHECK(st.co_raters[v] <= st.popularity[v]);
                CHECK(st.mean[v] == doctest::Approx(pop ? sum / pop : gsum / e.size()));
                CHECK(st.mean[v] >= 1.0);
                CHECK(st.mean[v] <= 5.0);
            }
        }
    }
}

TEST_CASE("co-rater rule names") {
    CHECK(parse_co_rater_rule("rated-any") == CoRaterRule::RatedAny);
    CHECK(parse_co_rater_rule("rated-all") == CoRaterRule::RatedAll);
    CHECK(to_string(CoRaterRule::RatedAll) == "rated-all");
}

TEST_CASE("appending users keeps the item universe") {
    auto m = testutil::make_dense_ids(2, 3, {{0, 0, 4}, {1, 2, 2}});
    auto big = m.with_appended_users({{{1, 5.0}}, {{0, 1.0}, {2, 3.0}}}, {"f0", "f1"});
    CHECK(big.num_users() == 4);
    CHECK(big.num_items() == 3);
    CHECK(big.rating(2, 1) == 5.0);
    CHECK(big.rating(0, 0) == 4.0);
    CHECK(big.item_ratings(2).size() == 2);
}

}  // TEST_SUITE
