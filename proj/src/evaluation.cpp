#include "aush/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace aush {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Real users of the clean data who have not rated the target.
std::vector<UserId> non_raters(const RatingMatrix& m, ItemId target) {
    std::vector<UserId> out;
    for (UserId u = 0; u < m.num_users(); ++u)
        if (!m.has_rating(u, target)) out.push_back(u);
    return out;
}

std::vector<UserId> intersect(const std::vector<UserId>& a, const std::vector<UserId>& b) {
    std::vector<UserId> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

}  // namespace

// ---- populations ---------------------------------------------------------------

double high_rating_threshold(const RatingScale& scale) {
    return scale.num_levels() >= 2 ? scale.max_rating - scale.step : scale.max_rating;
}

Population in_segment_users(const RatingMatrix& m, std::span<const ItemId> selected) {
    Population p;
    if (selected.empty()) p.flags.push_back("empty-selected-set");
    const double thr = high_rating_threshold(m.scale());
    for (UserId u = 0; u < m.num_users(); ++u) {
        bool ok = true;
        for (ItemId v : selected) {
            if (m.rating(u, v) < thr - 1e-9) {
                ok = false;
                break;
            }
        }
        if (ok) p.users.push_back(u);
    }
    if (p.users.empty()) p.flags.push_back("empty-segment");
    return p;
}

// ---- metrics -------------------------------------------------------------------

double prediction_shift(const VictimModel& before, const VictimModel& after, ItemId target,
                        std::span<const UserId> users) {
    if (users.empty()) return 0.0;
    double s = 0.0;
    for (UserId u : users) s += after.predict(u, target) - before.predict(u, target);
    return s / static_cast<double>(users.size());
}

HitRatio hit_ratio_at_k(const VictimModel& model, const RatingMatrix& clean_train, ItemId target, std::size_t k,
                        std::span<const UserId> users) {
    HitRatio hr;
    std::size_t hits = 0;
    bool short_list = false;
    for (UserId u : users) {
        if (clean_train.has_rating(u, target)) {
            ++hr.excluded;
            continue;
        }
        ++hr.evaluated;
        auto top = top_k(model, clean_train, u, k);
        short_list = short_list || top.short_list;
        if (std::find(top.items.begin(), top.items.end(), target) != top.items.end()) ++hits;
    }
    if (hr.excluded > 0) hr.flags.push_back("excluded-target-raters=" + std::to_string(hr.excluded));
    if (short_list) hr.flags.push_back("short-candidate-list");
    if (hr.evaluated == 0) {
        hr.flags.push_back("empty-population");
        return hr;
    }
    hr.value = static_cast<double>(hits) / static_cast<double>(hr.evaluated);
    return hr;
}

// ---- targets and selected items ---------------------------------------------------

std::string to_string(TargetMode m) { return m == TargetMode::Random ? "random" : "long-tail"; }

TargetMode parse_target_mode(const std::string& s) {
    if (s == "random") return TargetMode::Random;
    if (s == "long-tail" || s == "long_tail") return TargetMode::LongTail;
    throw std::invalid_argument("unknown target mode '" + s + "' (random, long-tail)");
}

std::vector<ItemId> select_targets(const RatingMatrix& m, TargetMode mode, std::size_t n, std::size_t threshold,
                                   std::uint64_t seed) {
    std::vector<ItemId> pool;
    for (ItemId v = 0; v < m.num_items(); ++v)
        if (mode == TargetMode::Random || m.item_ratings(v).size() <= threshold) pool.push_back(v);
    if (pool.size() < n)
        throw ValidationError("only " + std::to_string(pool.size()) + " candidate targets for " + to_string(mode) +
                              ", " + std::to_string(n) + " requested");
    Rng rng(seed);
    std::vector<ItemId> out;
    for (auto i : sample_without_replacement(pool.size(), n, rng)) out.push_back(pool[i]);
    return out;
}

ItemCategories load_item_categories(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    ItemCategories cats;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError(path, lineno, "expected item<TAB>categories");
        auto& list = cats[line.substr(0, tab)];
        std::stringstream ss(line.substr(tab + 1));
        std::string c;
        while (std::getline(ss, c, '|'))
            if (!c.empty()) list.push_back(c);
    }
    return cats;
}

std::vector<ItemId> choose_selected_items(const RatingMatrix& m, ItemId target, std::size_t count,
                                          const ItemCategories* categories) {
    if (count + 1 > m.num_items()) throw ValidationError("selected set larger than the catalogue");
    auto by_popularity = [&](ItemId a, ItemId b) {
        auto pa = m.item_ratings(a).size(), pb = m.item_ratings(b).size();
        return pa != pb ? pa > pb : a < b;
    };
    std::vector<ItemId> out;
    if (categories) {
        auto it = categories->find(m.item_label(target));
        if (it != categories->end() && !it->second.empty()) {
            std::set<std::string> mine(it->second.begin(), it->second.end());
            std::vector<ItemId> same;
            for (ItemId v = 0; v < m.num_items(); ++v) {
                if (v == target) continue;
                auto jt = categories->find(m.item_label(v));
                if (jt == categories->end()) continue;
                if (std::any_of(jt->second.begin(), jt->second.end(), [&](const auto& c) { return mine.count(c); }))
                    same.push_back(v);
            }
            std::sort(same.begin(), same.end(), by_popularity);
            for (ItemId v : same) {
                if (out.size() == count) break;
                out.push_back(v);
            }
        }
    }
    if (out.size() < count) {
        std::vector<ItemId> all;
        for (ItemId v = 0; v < m.num_items(); ++v)
            if (v != target && std::find(out.begin(), out.end(), v) == out.end()) all.push_back(v);
        std::sort(all.begin(), all.end(), by_popularity);
        for (ItemId v : all) {
            if (out.size() == count) break;
            out.push_back(v);
        }
    }
    return out;
}

// ---- experiment --------------------------------------------------------------------

std::string to_string(AttackKind k) {
    switch (k) {
        case AttackKind::Aush: return "aush";
        case AttackKind::Random: return "random";
        case AttackKind::Average: return "average";
        case AttackKind::Segment: return "segment";
        case AttackKind::Bandwagon: return "bandwagon";
        case AttackKind::None: return "none";
    }
    return "?";
}

AttackKind parse_attack_kind(const std::string& s) {
    for (auto k : {AttackKind::Aush, AttackKind::Random, AttackKind::Average, AttackKind::Segment,
                   AttackKind::Bandwagon, AttackKind::None})
        if (to_string(k) == s) return k;
    throw std::invalid_argument("unknown attack '" + s + "' (aush, random, average, segment, bandwagon, none)");
}

ProfileSet generate_attack(const ExperimentSetup& setup, std::optional<AushTrainingResult>* trained) {
    if (!setup.train) throw std::invalid_argument("experiment has no training data");
    const RatingMatrix& train = *setup.train;
    const std::string label = setup.attack.name.empty() ? to_string(setup.attack.kind) : setup.attack.name;
    ProfileSet ps;
    switch (setup.attack.kind) {
        case AttackKind::None:
            ps.attack = label;
            ps.config_hash = setup.config.hash();
            ps.seed = setup.seeds.attack_generate;
            ps.target = setup.config.target;
            return ps;
        default:
            break;
    }
    setup.config.validate(train.num_items());
    switch (setup.attack.kind) {
        case AttackKind::Aush: {
            auto sched = setup.attack.schedule;
            sched.weights = loss_weights_for(setup.attack.loss_variant);
            auto result = train_aush(train, setup.config, sched, setup.attack.strategy, setup.seeds.attack_train);
            ps = generate_profiles(result.model, train, setup.config, setup.attack.strategy,
                                   setup.seeds.attack_generate);
            if (result.uniform_fallbacks > 0)
                ps.flags.push_back("training-uniform-filler-fallbacks=" + std::to_string(result.uniform_fallbacks));
            if (trained) *trained = std::move(result);
            break;
        }
        default: {
            auto stats = compute_item_stats(train, setup.config.selected);
            BaselineKind b = parse_baseline_kind(to_string(setup.attack.kind));
            ps = gen_baseline_attack(b, setup.config, stats, setup.seeds.attack_generate);
        }
    }
    ps.attack = label;
    validate_profiles(ps, setup.config);
    return ps;
}

AttackReport evaluate_attack(const ExperimentSetup& setup, const ProfileSet& profiles, const VictimModel* clean_model,
                             ExperimentArtifacts* artifacts) {
    if (!setup.train) throw std::invalid_argument("experiment has no training data");
    const RatingMatrix& train = *setup.train;
    const AttackConfig& cfg = setup.config;

    AttackReport r;
    r.attack = profiles.attack.empty() ? to_string(setup.attack.kind) : profiles.attack;
    r.victim = to_string(setup.victim.kind);
    r.target = cfg.target;
    r.target_label = train.item_label(cfg.target);
    for (ItemId v : cfg.selected) r.selected_labels.push_back(train.item_label(v));
    r.attack_size = profiles.rows.size();
    r.filler_size = cfg.filler_size;
    r.profile_size = cfg.profile_size;
    r.k = setup.k;
    r.seeds = setup.seeds;
    r.config_hash = cfg.hash();
    r.flags = profiles.flags;
    r.settings["filler_strategy"] = to_string(setup.attack.strategy);
    r.settings["loss_variant"] = setup.attack.loss_variant;
    r.settings["co_rater_rule"] = "rated-any";
    r.settings["segment_threshold"] = std::to_string(high_rating_threshold(train.scale()));
    r.settings["population"] = "clean-users-without-target-rating";

    std::unique_ptr<VictimModel> own_clean;
    if (!clean_model) {
        auto t0 = Clock::now();
        own_clean = train_victim(setup.victim, train, setup.seeds.victim);
        r.runtimes_s["train_clean"] = seconds_since(t0);
        clean_model = own_clean.get();
    }

    auto t1 = Clock::now();
    RatingMatrix attacked = profiles.rows.empty() ? train : inject_profiles(train, profiles);
    // Same seed as the clean run, so the only difference is the injected data.
    auto after = train_victim(setup.victim, attacked, setup.seeds.victim);
    r.runtimes_s["train_attacked"] = seconds_since(t1);

    const auto all = non_raters(train, cfg.target);
    auto seg_pop = in_segment_users(train, cfg.selected);
    for (auto& f : seg_pop.flags) r.flags.push_back("segment:" + f);
    const auto seg = intersect(seg_pop.users, all);

    auto fill = [&](SegmentMetrics& out, const std::vector<UserId>& users, const char* tag) {
        out.users = users.size();
        out.prediction_shift = prediction_shift(*clean_model, *after, cfg.target, users);
        auto pre = hit_ratio_at_k(*clean_model, train, cfg.target, setup.k, users);
        auto post = hit_ratio_at_k(*after, train, cfg.target, setup.k, users);
        out.hr_before = pre.value;
        out.hr_after = post.value;
        for (auto& f : post.flags) r.flags.push_back(std::string(tag) + ":" + f);
    };
    auto t2 = Clock::now();
    fill(r.all_users, all, "all");
    fill(r.in_segment, seg, "in-segment");
    r.runtimes_s["metrics"] = seconds_since(t2);

    if (setup.score_detection && !profiles.rows.empty())
        r.detection = detection_scores(train, profiles);

    if (artifacts) {
        if (own_clean) artifacts->clean_model = std::move(own_clean);
        artifacts->attacked_model = std::move(after);
        artifacts->profiles = profiles;
    }
    return r;
}

AttackReport run_experiment(const ExperimentSetup& setup, ExperimentArtifacts* artifacts) {
    auto t0 = Clock::now();
    auto clean = train_victim(setup.victim, *setup.train, setup.seeds.victim);
    double t_clean = seconds_since(t0);

    std::optional<AushTrainingResult> trained;
    auto t1 = Clock::now();
    ProfileSet profiles = generate_attack(setup, &trained);
    double t_gen = seconds_since(t1);

    AttackReport r = evaluate_attack(setup, profiles, clean.get(), artifacts);
    r.runtimes_s["train_clean"] = t_clean;
    r.runtimes_s["generate_attack"] = t_gen;
    if (artifacts) {
        artifacts->clean_model = std::move(clean);
        artifacts->aush = std::move(trained);
    }
    return r;
}

// ---- aggregation & serialization -----------------------------------------------------

ReportSummary summarize(std::span<const AttackReport> reports, const std::string& target_class) {
    ReportSummary s;
    s.target_class = target_class;
    s.targets = reports.size();
    if (reports.empty()) return s;
    s.attack = reports.front().attack;
    s.victim = reports.front().victim;
    double pooled_all = 0.0, pooled_seg = 0.0;
    std::size_t n_all = 0, n_seg = 0;
    for (const auto& r : reports) {
        auto add = [](SegmentMetrics& acc, const SegmentMetrics& x) {
            acc.prediction_shift += x.prediction_shift;
            acc.hr_before += x.hr_before;
            acc.hr_after += x.hr_after;
            acc.users += x.users;
        };
        add(s.all_users_mean, r.all_users);
        add(s.in_segment_mean, r.in_segment);
        pooled_all += r.all_users.prediction_shift * static_cast<double>(r.all_users.users);
        pooled_seg += r.in_segment.prediction_shift * static_cast<double>(r.in_segment.users);
        n_all += r.all_users.users;
        n_seg += r.in_segment.users;
    }
    const double n = static_cast<double>(reports.size());
    for (auto* m : {&s.all_users_mean, &s.in_segment_mean}) {
        m->prediction_shift /= n;
        m->hr_before /= n;
        m->hr_after /= n;
    }
    s.all_users_pooled_ps = n_all ? pooled_all / static_cast<double>(n_all) : 0.0;
    s.in_segment_pooled_ps = n_seg ? pooled_seg / static_cast<double>(n_seg) : 0.0;
    return s;
}

namespace {

nlohmann::ordered_json metrics_json(const SegmentMetrics& m) {
    return {{"prediction_shift", m.prediction_shift},
            {"hr_before", m.hr_before},
            {"hr_after", m.hr_after},
            {"users", m.users}};
}

SegmentMetrics metrics_from(const nlohmann::json& j) {
    SegmentMetrics m;
    m.prediction_shift = j.at("prediction_shift").get<double>();
    m.hr_before = j.at("hr_before").get<double>();
    m.hr_after = j.at("hr_after").get<double>();
    m.users = j.at("users").get<std::size_t>();
    return m;
}

}  // namespace

std::string report_to_json(const AttackReport& r) {
    nlohmann::ordered_json j;
    j["attack"] = r.attack;
    j["victim"] = r.victim;
    j["target"] = r.target_label;
    j["selected"] = r.selected_labels;
    j["attack_size"] = r.attack_size;
    j["filler_size"] = r.filler_size;
    j["profile_size"] = r.profile_size;
    j["k"] = r.k;
    j["seeds"] = {{"victim", r.seeds.victim},
                  {"attack_train", r.seeds.attack_train},
                  {"attack_generate", r.seeds.attack_generate}};
    j["master_seed"] = r.master_seed;
    j["config_hash"] = r.config_hash;
    j["all_users"] = metrics_json(r.all_users);
    j["in_segment"] = metrics_json(r.in_segment);
    if (r.detection) {
        j["detection"] = {{"tvd", r.detection->tvd},
                          {"js", r.detection->js},
                          {"include_target", r.detection->include_target},
                          {"halved", r.detection->convention == DistanceConvention::Halved}};
    }
    j["flags"] = r.flags;
    j["settings"] = r.settings;
    j["runtimes_s"] = r.runtimes_s;
    return j.dump();
}

AttackReport report_from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    AttackReport r;
    r.attack = j.at("attack").get<std::string>();
    r.victim = j.at("victim").get<std::string>();
    r.target_label = j.at("target").get<std::string>();
    r.selected_labels = j.at("selected").get<std::vector<std::string>>();
    r.attack_size = j.at("attack_size").get<std::size_t>();
    r.filler_size = j.at("filler_size").get<std::size_t>();
    r.profile_size = j.at("profile_size").get<std::size_t>();
    r.k = j.at("k").get<std::size_t>();
    r.seeds.victim = j.at("seeds").at("victim").get<std::uint64_t>();
    r.seeds.attack_train = j.at("seeds").at("attack_train").get<std::uint64_t>();
    r.seeds.attack_generate = j.at("seeds").at("attack_generate").get<std::uint64_t>();
    r.master_seed = j.at("master_seed").get<std::uint64_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.all_users = metrics_from(j.at("all_users"));
    r.in_segment = metrics_from(j.at("in_segment"));
    if (j.contains("detection")) {
        DetectionScores d;
        d.tvd = j["detection"].at("tvd").get<double>();
        d.js = j["detection"].at("js").get<double>();
        d.include_target = j["detection"].at("include_target").get<bool>();
        d.convention = j["detection"].at("halved").get<bool>() ? DistanceConvention::Halved
                                                               : DistanceConvention::Unhalved;
        r.detection = d;
    }
    r.flags = j.at("flags").get<std::vector<std::string>>();
    r.settings = j.at("settings").get<std::map<std::string, std::string>>();
    r.runtimes_s = j.at("runtimes_s").get<std::map<std::string, double>>();
    return r;
}

std::string summary_csv_header() { return "attack,victim,target_class,population,metric,value\n"; }

std::string summary_csv_rows(const ReportSummary& s) {
    std::ostringstream os;
    os.precision(10);
    auto row = [&](const char* pop, const char* metric, double v) {
        os << s.attack << ',' << s.victim << ',' << s.target_class << ',' << pop << ',' << metric << ',' << v
           << '\n';
    };
    row("all", "ps_mean", s.all_users_mean.prediction_shift);
    row("all", "ps_pooled", s.all_users_pooled_ps);
    row("all", "hr_before", s.all_users_mean.hr_before);
    row("all", "hr_after", s.all_users_mean.hr_after);
    row("in-segment", "ps_mean", s.in_segment_mean.prediction_shift);
    row("in-segment", "ps_pooled", s.in_segment_pooled_ps);
    row("in-segment", "hr_before", s.in_segment_mean.hr_before);
    row("in-segment", "hr_after", s.in_segment_mean.hr_after);
    return os.str();
}

}  // namespace aush
