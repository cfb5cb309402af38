#include "aush/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

namespace aush {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                {
                    std::lock_guard lk(err_mu);
                    if (err) return;
                }
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lk(err_mu);
                    if (!err) err = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

namespace {

std::mutex log_mu;

void say(const RunContext& ctx, const std::string& msg) {
    if (ctx.quiet) return;
    std::lock_guard lk(log_mu);
    std::cerr << msg << std::endl;
}

fs::path out_path(const RunContext& ctx, const std::string& rel) { return fs::path(ctx.out_dir) / rel; }

json provenance(const RunContext& ctx) {
    return {{"config_hash", ctx.config.hash()}, {"master_seed", ctx.config.seed}};
}

void write_text(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
    out << text;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + p.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_meta(const RunContext& ctx, const fs::path& artifact, json extra = json::object()) {
    json meta = provenance(ctx);
    for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = it.value();
    write_text(artifact.string() + ".meta.json", meta.dump(2) + "\n");
}

template <class F>
auto tagged(const char* stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

// Labels may contain characters that are awkward in file names.
std::string file_part(const std::string& s) {
    std::string out;
    for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
    return out;
}

AttackConfig attack_config_for(const AttackEntry& a, const TargetPlan& t, const RatingScale& scale) {
    AttackConfig cfg;
    cfg.target = t.target;
    cfg.selected = t.selected;
    cfg.attack_size = a.attack_size;
    cfg.filler_size = a.filler_size;
    cfg.profile_size = profile_size_for(a.filler_size, t.selected.size());
    cfg.scale = scale;
    cfg.push = a.push;
    return cfg;
}

std::string model_path(const RunContext& ctx, const std::string& attack, const std::string& target) {
    return out_path(ctx, "models/" + file_part(attack) + "__" + file_part(target) + ".ckpt").string();
}

std::string victim_path(const RunContext& ctx, VictimKind kind) {
    return out_path(ctx, "victims/" + to_string(kind) + ".ckpt").string();
}

}  // namespace

std::string profile_path(const RunContext& ctx, const std::string& attack, const std::string& target_label,
                         const std::string& profiles_dir) {
    fs::path dir = profiles_dir.empty() ? out_path(ctx, "profiles") : fs::path(profiles_dir);
    return (dir / (file_part(attack) + "__" + file_part(target_label) + ".tsv")).string();
}

// ---- prepare-data ------------------------------------------------------------------

void stage_prepare(const RunContext& ctx) {
    tagged("prepare-data", [&] {
        const auto& c = ctx.config;
        const auto& d = c.dataset;
        RatingMatrix full = load_ratings(c.resolve(d.path), d.format, d.scale);
        if (d.min_user_ratings > 0) full = filter_dataset(full, d.min_user_ratings);
        TrainTestSplit split;
        if (d.split == "random") {
            split = split_ratings(full, d.test_fraction, derive_seed(c.seed, "split"));
        } else if (d.split == "file") {
            split = split_by_file(full, c.resolve(d.test_path), d.format);
        } else {
            split = {full, full.with_entries({})};
        }
        say(ctx, "prepare-data: " + std::to_string(full.num_users()) + " users, " +
                     std::to_string(full.num_items()) + " items, " + std::to_string(split.train.num_ratings()) +
                     " train / " + std::to_string(split.test.num_ratings()) + " test ratings");

        fs::create_directories(out_path(ctx, "data"));
        write_text(out_path(ctx, "config.json"), dump_config(c));
        export_ratings(split.train, out_path(ctx, "data/train.tsv").string());
        export_ratings(split.test, out_path(ctx, "data/test.tsv").string());
        write_labels(split.train.user_labels(), out_path(ctx, "data/users.txt").string());
        write_labels(split.train.item_labels(), out_path(ctx, "data/items.txt").string());
        write_meta(ctx, out_path(ctx, "data/train.tsv"), {{"ratings", split.train.num_ratings()}});
        write_meta(ctx, out_path(ctx, "data/test.tsv"), {{"ratings", split.test.num_ratings()}});
        write_meta(ctx, out_path(ctx, "config.json"));
        write_meta(ctx, out_path(ctx, "data/users.txt"), {{"count", split.train.num_users()}});
        write_meta(ctx, out_path(ctx, "data/items.txt"), {{"count", split.train.num_items()}});

        const RatingMatrix& train = split.train;
        std::vector<ItemId> targets;
        if (!c.targets.items.empty()) {
            for (const auto& l : c.targets.items) {
                ItemId v = train.find_item(l);
                if (v == train.num_items()) throw ConfigError("target item '" + l + "' is not in the dataset");
                targets.push_back(v);
            }
        } else {
            targets = select_targets(train, c.targets.mode, c.targets.count, c.targets.threshold,
                                     derive_seed(c.seed, "targets"));
        }
        ItemCategories cats;
        if (!d.categories_path.empty()) cats = load_item_categories(c.resolve(d.categories_path));

        json plan = provenance(ctx);
        plan["targets"] = json::array();
        for (ItemId t : targets) {
            std::vector<ItemId> sel;
            if (!c.selected.items.empty()) {
                for (const auto& l : c.selected.items) {
                    ItemId v = train.find_item(l);
                    if (v == train.num_items()) throw ConfigError("selected item '" + l + "' is not in the dataset");
                    if (v == t) throw ConfigError("selected item '" + l + "' is also a target");
                    sel.push_back(v);
                }
            } else {
                sel = choose_selected_items(train, t, c.selected.size, cats.empty() ? nullptr : &cats);
            }
            json entry;
            entry["target"] = train.item_label(t);
            entry["popularity"] = train.item_ratings(t).size();
            entry["selected"] = json::array();
            for (ItemId v : sel) entry["selected"].push_back(train.item_label(v));
            plan["targets"].push_back(entry);
        }
        write_text(out_path(ctx, "data/targets.json"), plan.dump(2) + "\n");
    });
}

PreparedData load_prepared(const RunContext& ctx) {
    return tagged("load-prepared", [&] {
        const auto& c = ctx.config;
        auto plan = nlohmann::json::parse(read_text(out_path(ctx, "data/targets.json")));
        if (plan.at("config_hash").get<std::string>() != c.hash())
            throw std::runtime_error("prepared data in '" + ctx.out_dir +
                                     "' was produced by a different config or seed; rerun prepare-data");
        LabelUniverse u{read_labels(out_path(ctx, "data/users.txt").string()),
                        read_labels(out_path(ctx, "data/items.txt").string())};
        PreparedData p;
        p.train = load_ratings(out_path(ctx, "data/train.tsv").string(), DatasetFormat::TsvUirt, c.dataset.scale, &u);
        p.test = load_ratings(out_path(ctx, "data/test.tsv").string(), DatasetFormat::TsvUirt, c.dataset.scale, &u);
        auto id = [&](const std::string& l) {
            ItemId v = p.train.find_item(l);
            if (v == p.train.num_items()) throw std::runtime_error("unknown item '" + l + "' in targets.json");
            return v;
        };
        for (const auto& e : plan.at("targets")) {
            TargetPlan t;
            t.target = id(e.at("target").get<std::string>());
            for (const auto& s : e.at("selected")) t.selected.push_back(id(s.get<std::string>()));
            p.targets.push_back(std::move(t));
        }
        return p;
    });
}

// ---- train-victim ------------------------------------------------------------------

void stage_train_victims(const RunContext& ctx) {
    auto data = load_prepared(ctx);
    tagged("train-victim", [&] {
        const auto& c = ctx.config;
        fs::create_directories(out_path(ctx, "victims"));
        parallel_for(c.victims.size(), ctx.workers, [&](std::size_t i) {
            const auto& spec = c.victims[i];
            const auto path = victim_path(ctx, spec.kind);
            try {
                auto model = train_victim(spec, data.train, victim_seed(c.seed, spec.kind));
                auto ck = model->checkpoint();
                ck.meta["config_hash"] = c.hash();
                ck.meta["master_seed"] = std::to_string(c.seed);
                save_checkpoint(path, ck);
                say(ctx, "train-victim: " + to_string(spec.kind) + " " +
                             std::to_string(model->trace().epoch_loss.size()) + " epochs, final loss " +
                             std::to_string(model->trace().epoch_loss.empty() ? 0.0 : model->trace().epoch_loss.back()));
            } catch (const TrainingDivergedError& e) {
                save_checkpoint(path + ".last-stable", e.last_stable());
                throw;
            }
        });
    });
}

// ---- gen-attack --------------------------------------------------------------------

void stage_generate_attacks(const RunContext& ctx) {
    auto data = load_prepared(ctx);
    tagged("gen-attack", [&] {
        const auto& c = ctx.config;
        const std::size_t nt = data.targets.size();
        fs::create_directories(out_path(ctx, "profiles"));
        parallel_for(c.attacks.size() * nt, ctx.workers, [&](std::size_t job) {
            const auto& a = c.attacks[job / nt];
            const auto& t = data.targets[job % nt];
            const std::string tl = data.train.item_label(t.target);
            ExperimentSetup setup;
            setup.train = &data.train;
            setup.attack = a.spec;
            setup.config = attack_config_for(a, t, data.train.scale());
            setup.seeds = experiment_seeds(c.seed, a.name(), c.victims.front().kind, tl);
            std::optional<AushTrainingResult> trained;
            ProfileSet ps = generate_attack(setup, &trained);
            json extra = provenance(ctx);
            extra["attack_train_seed"] = setup.seeds.attack_train;
            export_profiles(ps, data.train, profile_path(ctx, a.name(), tl), extra.dump());
            if (trained) {
                auto ck = to_checkpoint(trained->model);
                ck.meta["config_hash"] = c.hash();
                ck.meta["master_seed"] = std::to_string(c.seed);
                const auto mp = model_path(ctx, a.name(), tl);
                fs::create_directories(fs::path(mp).parent_path());
                save_checkpoint(mp, ck);
                write_text(mp + ".log.jsonl", format_training_log(trained->log));
                write_meta(ctx, mp + ".log.jsonl");
            }
            say(ctx, "gen-attack: " + a.name() + " target " + tl + ": " + std::to_string(ps.rows.size()) +
                         " profiles");
        });
    });
}

// ---- detect ------------------------------------------------------------------------

void stage_detect(const RunContext& ctx) {
    auto data = load_prepared(ctx);
    tagged("detect", [&] {
        const auto& c = ctx.config;
        if (data.targets.empty()) throw std::runtime_error("no targets");
        const auto& t = data.targets.front();
        const std::string tl = data.train.item_label(t.target);
        const auto conv = c.detection.halved ? DistanceConvention::Halved : DistanceConvention::Unhalved;

        std::vector<const AttackEntry*> attacks;
        for (const auto& a : c.attacks)
            if (a.spec.kind != AttackKind::None) attacks.push_back(&a);
        std::vector<DetectionScores> scores(attacks.size());
        fs::create_directories(out_path(ctx, "detection"));

        parallel_for(attacks.size(), ctx.workers, [&](std::size_t i) {
            const auto& a = *attacks[i];
            AttackConfig cfg = attack_config_for(a, t, data.train.scale());
            cfg.attack_size = c.detection.profiles ? c.detection.profiles : data.train.num_users();
            const auto seed = detection_seed(c.seed, a.name(), "generate");
            ProfileSet ps;
            if (a.spec.kind == AttackKind::Aush) {
                const auto mp = model_path(ctx, a.name(), tl);
                if (!fs::exists(mp)) throw std::runtime_error("missing " + mp + "; run gen-attack first");
                auto model = aush_model_from_checkpoint(load_checkpoint(mp));
                ps = generate_profiles(model, data.train, cfg, a.spec.strategy, seed);
            } else {
                auto stats = compute_item_stats(data.train, cfg.selected);
                ps = gen_baseline_attack(parse_baseline_kind(to_string(a.spec.kind)), cfg, stats, seed);
            }
            ps.attack = a.name();
            validate_profiles(ps, cfg);
            export_profiles(ps, data.train, out_path(ctx, "detection/" + file_part(a.name()) + ".tsv").string(),
                            provenance(ctx).dump());
            scores[i] = detection_scores(data.train, ps, c.detection.include_target, conv);
            say(ctx, "detect: " + a.name() + " tvd " + std::to_string(scores[i].tvd) + " js " +
                         std::to_string(scores[i].js));
        });

        std::string csv = detection_csv_header();
        json js = provenance(ctx);
        js["target"] = tl;
        js["scores"] = json::object();
        for (std::size_t i = 0; i < attacks.size(); ++i) {
            csv += detection_csv_row(attacks[i]->name(), c.dataset.name, scores[i]);
            js["scores"][attacks[i]->name()] = {{"tvd", scores[i].tvd},
                                                {"js", scores[i].js},
                                                {"include_target", scores[i].include_target},
                                                {"halved", scores[i].convention == DistanceConvention::Halved},
                                                {"profiles", scores[i].fake_profiles},
                                                {"real_users", scores[i].real_users}};
        }
        write_text(out_path(ctx, "detection.csv"), csv);
        write_meta(ctx, out_path(ctx, "detection.csv"));
        write_text(out_path(ctx, "detection/scores.json"), js.dump(2) + "\n");
    });
}

// ---- evaluate ----------------------------------------------------------------------

std::vector<AttackReport> stage_evaluate(const RunContext& ctx, const std::string& profiles_dir) {
    auto data = load_prepared(ctx);
    return tagged("evaluate", [&] {
        const auto& c = ctx.config;
        std::vector<std::unique_ptr<VictimModel>> clean;
        for (const auto& v : c.victims) {
            const auto p = victim_path(ctx, v.kind);
            if (!fs::exists(p)) throw std::runtime_error("missing " + p + "; run train-victim first");
            auto ck = load_checkpoint(p);
            if (ck.meta.count("config_hash") && ck.meta_value("config_hash") != c.hash())
                throw std::runtime_error(p + " was trained under a different config");
            clean.push_back(load_victim(ck));
        }

        std::map<std::string, DetectionScores> detection;
        const auto scores_path = out_path(ctx, "detection/scores.json");
        if (fs::exists(scores_path)) {
            auto j = nlohmann::json::parse(read_text(scores_path));
            if (j.value("config_hash", "") == c.hash()) {
                for (auto it = j["scores"].begin(); it != j["scores"].end(); ++it) {
                    DetectionScores s;
                    s.tvd = it.value().at("tvd").get<double>();
                    s.js = it.value().at("js").get<double>();
                    s.include_target = it.value().at("include_target").get<bool>();
                    s.convention = it.value().at("halved").get<bool>() ? DistanceConvention::Halved
                                                                       : DistanceConvention::Unhalved;
                    s.fake_profiles = it.value().at("profiles").get<std::size_t>();
                    s.real_users = it.value().at("real_users").get<std::size_t>();
                    detection[it.key()] = s;
                }
            }
        }

        const std::size_t nt = data.targets.size(), na = c.attacks.size();
        std::vector<AttackReport> reports(c.victims.size() * na * nt);
        parallel_for(reports.size(), ctx.workers, [&](std::size_t job) {
            const std::size_t vi = job / (na * nt), ai = (job / nt) % na, ti = job % nt;
            const auto& a = c.attacks[ai];
            const auto& t = data.targets[ti];
            const std::string tl = data.train.item_label(t.target);
            ExperimentSetup setup;
            setup.train = &data.train;
            setup.victim = c.victims[vi];
            setup.attack = a.spec;
            setup.config = attack_config_for(a, t, data.train.scale());
            setup.k = c.k;
            setup.seeds = experiment_seeds(c.seed, a.name(), setup.victim.kind, tl);
            ProfileSet ps = load_profiles(profile_path(ctx, a.name(), tl, profiles_dir), data.train);
            if (ps.target != t.target && !ps.rows.empty())
                throw std::runtime_error("profile set for " + a.name() + " targets a different item");
            if (!ps.rows.empty()) validate_profiles(ps, [&] {
                auto cfg = setup.config;
                cfg.attack_size = ps.rows.size();
                return cfg;
            }());
            if (ps.attack.empty()) ps.attack = a.name();
            AttackReport r = evaluate_attack(setup, ps, clean[vi].get());
            r.attack = a.name();
            r.master_seed = c.seed;
            r.config_hash = c.hash();
            r.settings["attack_kind"] = to_string(a.spec.kind);
            r.settings["push"] = a.push ? "true" : "false";
            r.settings["target_mode"] = c.targets.items.empty() ? to_string(c.targets.mode) : "explicit";
            r.settings["target_threshold"] = std::to_string(c.targets.threshold);
            if (a.spec.kind == AttackKind::Aush) {
                const auto& s = a.spec.schedule;
                r.settings["epochs"] = std::to_string(s.epochs);
                r.settings["d_steps"] = std::to_string(s.d_steps);
                r.settings["g_steps"] = std::to_string(s.g_steps);
                r.settings["unobserved_fraction"] = std::to_string(s.unobserved_fraction);
                r.settings["non_saturating"] = s.non_saturating ? "true" : "false";
            }
            r.settings["prediction_clipping"] = "clipped";
            if (auto it = detection.find(a.name()); it != detection.end()) r.detection = it->second;
            reports[job] = std::move(r);
            say(ctx, "evaluate: " + a.name() + " / " + to_string(setup.victim.kind) + " / " + tl + ": PS " +
                         std::to_string(reports[job].all_users.prediction_shift) + ", HR@" + std::to_string(c.k) +
                         " " + std::to_string(reports[job].all_users.hr_before) + " -> " +
                         std::to_string(reports[job].all_users.hr_after));
        });

        // deterministic merge by (target, attack, victim)
        std::vector<std::size_t> order(reports.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
            const auto& a = reports[x];
            const auto& b = reports[y];
            return std::tie(a.target_label, a.attack, a.victim) < std::tie(b.target_label, b.attack, b.victim);
        });
        std::vector<AttackReport> merged;
        std::string lines;
        for (auto i : order) {
            const auto& r = reports[i];
            write_text(out_path(ctx, "reports/" + file_part(r.attack) + "__" + r.victim + "__" +
                                         file_part(r.target_label) + ".json"),
                       report_to_json(r) + "\n");
            lines += report_to_json(r) + "\n";
            merged.push_back(r);
        }
        write_text(out_path(ctx, "reports.jsonl"), lines);
        write_meta(ctx, out_path(ctx, "reports.jsonl"));

        const std::string tclass = c.targets.items.empty() ? to_string(c.targets.mode) : "explicit";
        std::string csv = summary_csv_header();
        for (const auto& v : c.victims) {
            for (const auto& a : c.attacks) {
                std::vector<AttackReport> group;
                for (const auto& r : merged)
                    if (r.attack == a.name() && r.victim == to_string(v.kind)) group.push_back(r);
                csv += summary_csv_rows(summarize(group, tclass));
            }
        }
        write_text(out_path(ctx, "summary.csv"), csv);
        write_meta(ctx, out_path(ctx, "summary.csv"));
        return merged;
    });
}

std::vector<AttackReport> run_all(const RunContext& ctx) {
    stage_prepare(ctx);
    stage_train_victims(ctx);
    stage_generate_attacks(ctx);
    if (ctx.config.detection.enabled) stage_detect(ctx);
    return stage_evaluate(ctx);
}

}  // namespace aush
