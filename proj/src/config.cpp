#include "aush/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace aush {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!ok.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

template <class T>
T require(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(where + ": missing required key '" + key + "'");
    T out{};
    read(j, key, out, where);
    return out;
}

// Unsigned fields reject negative numbers instead of wrapping.
void read_count(const json& j, const char* key, std::size_t& out, const std::string& where) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0))
        throw ConfigError(where + "." + key + ": expected a non-negative integer");
    out = v.get<std::size_t>();
}

RatingScale parse_scale(const json& j, const std::string& where) {
    check_keys(j, {"min", "max", "step"}, where);
    RatingScale s;
    read(j, "min", s.min_rating, where);
    read(j, "max", s.max_rating, where);
    read(j, "step", s.step, where);
    try {
        s.validate();
    } catch (const std::exception& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return s;
}

DatasetConfig parse_dataset(const json& j) {
    const std::string w = "dataset";
    check_keys(j,
               {"name", "path", "format", "scale", "min_user_ratings", "split", "test_fraction", "test_path",
                "categories"},
               w);
    DatasetConfig d;
    d.path = require<std::string>(j, "path", w);
    read(j, "name", d.name, w);
    std::string fmt = to_string(d.format);
    read(j, "format", fmt, w);
    try {
        d.format = parse_dataset_format(fmt);
    } catch (const std::exception& e) {
        throw ConfigError(w + ".format: " + e.what());
    }
    if (j.contains("scale")) d.scale = parse_scale(j["scale"], w + ".scale");
    read_count(j, "min_user_ratings", d.min_user_ratings, w);
    read(j, "split", d.split, w);
    read(j, "test_fraction", d.test_fraction, w);
    read(j, "test_path", d.test_path, w);
    read(j, "categories", d.categories_path, w);
    if (d.split != "random" && d.split != "file" && d.split != "none")
        throw ConfigError(w + ".split: expected random, file or none");
    if (d.split == "random" && !(d.test_fraction >= 0.0 && d.test_fraction < 1.0))
        throw ConfigError(w + ".test_fraction: must lie in [0, 1)");
    if (d.split == "file" && d.test_path.empty()) throw ConfigError(w + ": split 'file' needs test_path");
    return d;
}

VictimSpec parse_victim(const json& j, const std::string& w) {
    VictimSpec v;
    std::string kind = require<std::string>(j, "kind", w);
    try {
        v.kind = parse_victim_kind(kind);
    } catch (const std::exception& e) {
        throw ConfigError(w + ".kind: " + e.what());
    }
    if (v.kind == VictimKind::Nmf) {
        check_keys(j, {"kind", "factors", "max_epochs", "learning_rate", "reg", "tolerance", "window"}, w);
        read_count(j, "factors", v.nmf.factors, w);
        read_count(j, "max_epochs", v.nmf.max_epochs, w);
        read(j, "learning_rate", v.nmf.learning_rate, w);
        read(j, "reg", v.nmf.reg, w);
        read(j, "tolerance", v.nmf.tolerance, w);
        read_count(j, "window", v.nmf.window, w);
        if (v.nmf.factors == 0) throw ConfigError(w + ".factors: must be positive");
    } else {
        check_keys(j, {"kind", "hidden", "max_epochs", "learning_rate", "reg", "batch_size", "tolerance", "window"},
                   w);
        v.autorec.axis = v.kind == VictimKind::UserAutoRec ? AutoRecAxis::User : AutoRecAxis::Item;
        read_count(j, "hidden", v.autorec.hidden, w);
        read_count(j, "max_epochs", v.autorec.max_epochs, w);
        read(j, "learning_rate", v.autorec.learning_rate, w);
        read(j, "reg", v.autorec.reg, w);
        read_count(j, "batch_size", v.autorec.batch_size, w);
        read(j, "tolerance", v.autorec.tolerance, w);
        read_count(j, "window", v.autorec.window, w);
        if (v.autorec.hidden == 0 || v.autorec.batch_size == 0)
            throw ConfigError(w + ": hidden and batch_size must be positive");
    }
    return v;
}

TrainingSchedule parse_schedule(const json& j, const std::string& w) {
    check_keys(j,
               {"epochs", "d_steps", "g_steps", "batch_size", "unobserved_fraction", "learning_rate", "clamp_eps",
                "non_saturating"},
               w);
    TrainingSchedule s;
    read_count(j, "epochs", s.epochs, w);
    read_count(j, "d_steps", s.d_steps, w);
    read_count(j, "g_steps", s.g_steps, w);
    read_count(j, "batch_size", s.batch_size, w);
    read(j, "unobserved_fraction", s.unobserved_fraction, w);
    read(j, "learning_rate", s.learning_rate, w);
    read(j, "clamp_eps", s.clamp_eps, w);
    read(j, "non_saturating", s.non_saturating, w);
    try {
        s.validate();
    } catch (const std::exception& e) {
        throw ConfigError(w + ": " + e.what());
    }
    return s;
}

AttackEntry parse_attack(const json& j, const std::string& w, std::size_t num_selected) {
    check_keys(j,
               {"kind", "name", "attack_size", "filler_size", "profile_size", "push", "filler_strategy", "loss",
                "schedule"},
               w);
    AttackEntry a;
    std::string kind = require<std::string>(j, "kind", w);
    try {
        a.spec.kind = parse_attack_kind(kind);
    } catch (const std::exception& e) {
        throw ConfigError(w + ".kind: " + e.what());
    }
    a.spec.name = kind;
    read(j, "name", a.spec.name, w);
    read_count(j, "attack_size", a.attack_size, w);
    read_count(j, "filler_size", a.filler_size, w);
    read(j, "push", a.push, w);
    std::string strat = to_string(a.spec.strategy);
    read(j, "filler_strategy", strat, w);
    try {
        a.spec.strategy = parse_filler_strategy(strat);
    } catch (const std::exception& e) {
        throw ConfigError(w + ".filler_strategy: " + e.what());
    }
    read(j, "loss", a.spec.loss_variant, w);
    try {
        a.spec.schedule.weights = loss_weights_for(a.spec.loss_variant);
    } catch (const std::exception& e) {
        throw ConfigError(w + ".loss: " + e.what());
    }
    if (j.contains("schedule")) {
        auto weights = a.spec.schedule.weights;
        a.spec.schedule = parse_schedule(j["schedule"], w + ".schedule");
        a.spec.schedule.weights = weights;
    }
    const std::size_t p = profile_size_for(a.filler_size, num_selected);
    a.profile_size = p;
    if (j.contains("profile_size")) {
        std::size_t given = 0;
        read_count(j, "profile_size", given, w);
        if (given != p)
            throw ConfigError(w + ".profile_size: P=" + std::to_string(given) + " violates P = F + |S| + 1 = " +
                              std::to_string(a.filler_size) + " + " + std::to_string(num_selected) + " + 1 = " +
                              std::to_string(p));
    }
    if (a.attack_size == 0 && a.spec.kind != AttackKind::None)
        throw ConfigError(w + ".attack_size: must be positive");
    return a;
}

}  // namespace

std::string ExperimentConfig::resolve(const std::string& path) const {
    if (path.empty()) return path;
    fs::path p(path);
    return p.is_absolute() ? path : (fs::path(base_dir) / p).lexically_normal().string();
}

std::string ExperimentConfig::hash() const { return hash_hex(dump_config(*this)); }

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) { return dump_config(a) == dump_config(b); }

ExperimentConfig parse_config_text(const std::string& text, const std::string& base_dir, bool check_files) {
    json j;
    try {
        j = json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j, {"seed", "output_dir", "dataset", "victims", "attacks", "targets", "selected", "detection", "k"},
               "config");
    ExperimentConfig c;
    c.base_dir = base_dir;
    read(j, "seed", c.seed, "config");
    read(j, "output_dir", c.output_dir, "config");
    read_count(j, "k", c.k, "config");
    if (c.k == 0) throw ConfigError("config.k: must be positive");
    if (!j.contains("dataset")) throw ConfigError("config: missing required key 'dataset'");
    c.dataset = parse_dataset(j["dataset"]);

    if (j.contains("selected")) {
        const auto& s = j["selected"];
        check_keys(s, {"size", "items"}, "selected");
        read_count(s, "size", c.selected.size, "selected");
        read(s, "items", c.selected.items, "selected");
        if (!c.selected.items.empty()) {
            if (j["selected"].contains("size") && c.selected.size != c.selected.items.size())
                throw ConfigError("selected: size disagrees with the number of listed items");
            c.selected.size = c.selected.items.size();
        }
    }

    if (!j.contains("victims") || !j["victims"].is_array() || j["victims"].empty())
        throw ConfigError("config: 'victims' must be a non-empty array");
    std::set<VictimKind> seen_v;
    for (std::size_t i = 0; i < j["victims"].size(); ++i) {
        auto v = parse_victim(j["victims"][i], "victims[" + std::to_string(i) + "]");
        if (!seen_v.insert(v.kind).second) throw ConfigError("victims: '" + to_string(v.kind) + "' listed twice");
        c.victims.push_back(v);
    }

    if (!j.contains("attacks") || !j["attacks"].is_array() || j["attacks"].empty())
        throw ConfigError("config: 'attacks' must be a non-empty array");
    std::set<std::string> seen_a;
    for (std::size_t i = 0; i < j["attacks"].size(); ++i) {
        auto a = parse_attack(j["attacks"][i], "attacks[" + std::to_string(i) + "]", c.selected.size);
        if (!seen_a.insert(a.name()).second) throw ConfigError("attacks: name '" + a.name() + "' listed twice");
        c.attacks.push_back(a);
    }

    if (j.contains("targets")) {
        const auto& t = j["targets"];
        check_keys(t, {"mode", "count", "threshold", "items"}, "targets");
        std::string mode = to_string(c.targets.mode);
        read(t, "mode", mode, "targets");
        try {
            c.targets.mode = parse_target_mode(mode);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("targets.mode: ") + e.what());
        }
        read_count(t, "count", c.targets.count, "targets");
        read_count(t, "threshold", c.targets.threshold, "targets");
        read(t, "items", c.targets.items, "targets");
        if (!c.targets.items.empty()) c.targets.count = c.targets.items.size();
        if (c.targets.count == 0) throw ConfigError("targets.count: must be positive");
    }

    if (j.contains("detection")) {
        const auto& d = j["detection"];
        check_keys(d, {"enabled", "profiles", "include_target", "halved"}, "detection");
        read(d, "enabled", c.detection.enabled, "detection");
        read_count(d, "profiles", c.detection.profiles, "detection");
        read(d, "include_target", c.detection.include_target, "detection");
        read(d, "halved", c.detection.halved, "detection");
    }

    if (check_files) {
        auto must_exist = [&](const std::string& p, const char* what) {
            if (!p.empty() && !fs::exists(c.resolve(p)))
                throw ConfigError(std::string("dataset.") + what + ": file '" + c.resolve(p) + "' does not exist");
        };
        must_exist(c.dataset.path, "path");
        must_exist(c.dataset.test_path, "test_path");
        must_exist(c.dataset.categories_path, "categories");
    }
    return c;
}

ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    auto dir = fs::path(path).parent_path().string();
    return parse_config_text(ss.str(), dir.empty() ? "." : dir, true);
}

std::string dump_config(const ExperimentConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    j["k"] = c.k;
    const auto& d = c.dataset;
    j["dataset"] = {{"name", d.name},
                    {"path", d.path},
                    {"format", to_string(d.format)},
                    {"scale", {{"min", d.scale.min_rating}, {"max", d.scale.max_rating}, {"step", d.scale.step}}},
                    {"min_user_ratings", d.min_user_ratings},
                    {"split", d.split},
                    {"test_fraction", d.test_fraction},
                    {"test_path", d.test_path},
                    {"categories", d.categories_path}};
    j["selected"] = {{"size", c.selected.size}, {"items", c.selected.items}};
    j["victims"] = json::array();
    for (const auto& v : c.victims) {
        json e{{"kind", to_string(v.kind)}};
        if (v.kind == VictimKind::Nmf) {
            e["factors"] = v.nmf.factors;
            e["max_epochs"] = v.nmf.max_epochs;
            e["learning_rate"] = v.nmf.learning_rate;
            e["reg"] = v.nmf.reg;
            e["tolerance"] = v.nmf.tolerance;
            e["window"] = v.nmf.window;
        } else {
            e["hidden"] = v.autorec.hidden;
            e["max_epochs"] = v.autorec.max_epochs;
            e["learning_rate"] = v.autorec.learning_rate;
            e["reg"] = v.autorec.reg;
            e["batch_size"] = v.autorec.batch_size;
            e["tolerance"] = v.autorec.tolerance;
            e["window"] = v.autorec.window;
        }
        j["victims"].push_back(e);
    }
    j["attacks"] = json::array();
    for (const auto& a : c.attacks) {
        const auto& s = a.spec.schedule;
        j["attacks"].push_back({{"kind", to_string(a.spec.kind)},
                                {"name", a.spec.name},
                                {"attack_size", a.attack_size},
                                {"filler_size", a.filler_size},
                                {"profile_size", a.profile_size},
                                {"push", a.push},
                                {"filler_strategy", to_string(a.spec.strategy)},
                                {"loss", a.spec.loss_variant},
                                {"schedule",
                                 {{"epochs", s.epochs},
                                  {"d_steps", s.d_steps},
                                  {"g_steps", s.g_steps},
                                  {"batch_size", s.batch_size},
                                  {"unobserved_fraction", s.unobserved_fraction},
                                  {"learning_rate", s.learning_rate},
                                  {"clamp_eps", s.clamp_eps},
                                  {"non_saturating", s.non_saturating}}}});
    }
    j["targets"] = {{"mode", to_string(c.targets.mode)},
                    {"count", c.targets.count},
                    {"threshold", c.targets.threshold},
                    {"items", c.targets.items}};
    j["detection"] = {{"enabled", c.detection.enabled},
                      {"profiles", c.detection.profiles},
                      {"include_target", c.detection.include_target},
                      {"halved", c.detection.halved}};
    return j.dump(2) + "\n";
}

std::uint64_t victim_seed(std::uint64_t master, VictimKind victim) {
    return derive_seed(master, "victim/" + to_string(victim));
}

Seeds experiment_seeds(std::uint64_t master, const std::string& attack, VictimKind victim,
                       const std::string& target_label) {
    Seeds s;
    s.victim = victim_seed(master, victim);
    // Attack seeds ignore the victim: one profile set per (attack, target) is shared by all victims.
    s.attack_train = derive_seed(master, "attack-train/" + attack + "/" + target_label);
    s.attack_generate = derive_seed(master, "attack-generate/" + attack + "/" + target_label);
    return s;
}

std::uint64_t detection_seed(std::uint64_t master, const std::string& attack, const std::string& part) {
    return derive_seed(master, "detection/" + attack + "/" + part);
}

}  // namespace aush
