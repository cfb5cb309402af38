#include "aush/profile.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>
#include <unordered_map>

#include "aush/random.hpp"

namespace aush {

void AttackConfig::validate(std::size_t num_items) const {
    scale.validate();
    if (attack_size < 1) throw ValidationError("attack config: attack size A must be >= 1");
    if (profile_size != profile_size_for(filler_size, selected.size()))
        throw ValidationError("attack config: profile size P=" + std::to_string(profile_size) +
                              " violates P = F + |S| + 1 = " + std::to_string(filler_size) + " + " +
                              std::to_string(selected.size()) + " + 1");
    if (target >= num_items) throw ValidationError("attack config: target item out of range");
    std::vector<ItemId> s = selected;
    std::sort(s.begin(), s.end());
    if (std::adjacent_find(s.begin(), s.end()) != s.end())
        throw ValidationError("attack config: selected items contain duplicates");
    for (ItemId v : s) {
        if (v >= num_items) throw ValidationError("attack config: selected item out of range");
        if (v == target) throw ValidationError("attack config: target item must not be in the selected set");
    }
    if (profile_size > num_items) throw ValidationError("attack config: profile size exceeds number of items");
}

std::string AttackConfig::canonical() const {
    std::ostringstream os;
    os.precision(17);
    os << "target=" << target << ";selected=";
    for (std::size_t i = 0; i < selected.size(); ++i) os << (i ? "," : "") << selected[i];
    os << ";A=" << attack_size << ";F=" << filler_size << ";P=" << profile_size << ";scale=" << scale.min_rating
       << ":" << scale.max_rating << ":" << scale.step << ";push=" << (push ? 1 : 0);
    return os.str();
}

std::string AttackConfig::hash() const { return hash_hex(canonical()); }

ProfileRow assemble_profile(std::span<const ItemRating> fillers, std::span<const ItemId> selected,
                            std::span<const double> selected_ratings, ItemId target, double target_rating,
                            const RatingScale& scale) {
    if (selected.size() != selected_ratings.size())
        throw std::invalid_argument("assemble_profile: selected/ratings size mismatch");
    ProfileRow row(fillers.begin(), fillers.end());
    for (std::size_t i = 0; i < selected.size(); ++i) row.push_back({selected[i], selected_ratings[i]});
    row.push_back({target, target_rating});
    std::sort(row.begin(), row.end(), [](const ItemRating& a, const ItemRating& b) { return a.item < b.item; });
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i > 0 && row[i].item == row[i - 1].item)
            throw ValidationError("assemble_profile: item " + std::to_string(row[i].item) + " appears twice");
        if (!scale.on_grid(row[i].rating))
            throw ValidationError("assemble_profile: rating off the scale grid for item " +
                                  std::to_string(row[i].item));
    }
    return row;
}

void validate_profiles(const ProfileSet& profiles, const AttackConfig& cfg) {
    if (profiles.rows.size() != cfg.attack_size)
        throw ValidationError("profile set has " + std::to_string(profiles.rows.size()) + " rows, expected A=" +
                              std::to_string(cfg.attack_size));
    for (std::size_t r = 0; r < profiles.rows.size(); ++r) {
        const auto& row = profiles.rows[r];
        const auto where = "profile " + std::to_string(r) + ": ";
        if (row.size() != cfg.profile_size)
            throw ValidationError(where + std::to_string(row.size()) + " ratings, expected P=" +
                                  std::to_string(cfg.profile_size));
        std::size_t target_hits = 0;
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i > 0 && row[i].item <= row[i - 1].item) throw ValidationError(where + "items not strictly sorted");
            if (!cfg.scale.on_grid(row[i].rating)) throw ValidationError(where + "rating off the scale grid");
            if (row[i].item == cfg.target) {
                ++target_hits;
                if (row[i].rating != cfg.target_rating()) throw ValidationError(where + "target rating is not extreme");
            }
        }
        if (target_hits != 1) throw ValidationError(where + "target item missing");
    }
}

RatingMatrix inject_profiles(const RatingMatrix& train, const ProfileSet& profiles) {
    std::vector<std::string> labels;
    labels.reserve(profiles.rows.size());
    for (std::size_t i = 0; i < profiles.rows.size(); ++i) labels.push_back("fake_" + std::to_string(i));
    return train.with_appended_users(profiles.rows, labels);
}

std::string format_profiles(const ProfileSet& profiles, const RatingMatrix& items) {
    std::ostringstream os;
    os.precision(10);
    for (std::size_t r = 0; r < profiles.rows.size(); ++r)
        for (const auto& e : profiles.rows[r])
            os << "fake_" << r << '\t' << items.item_label(e.item) << '\t' << e.rating << '\n';
    return os.str();
}

void export_profiles(const ProfileSet& profiles, const RatingMatrix& items, const std::string& path,
                     const std::string& extra_meta_json) {
    {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write profile file '" + path + "'");
        out << format_profiles(profiles, items);
    }
    nlohmann::ordered_json meta;
    meta["attack"] = profiles.attack;
    meta["seed"] = profiles.seed;
    meta["attack_config_hash"] = profiles.config_hash;
    meta["target"] = items.item_label(profiles.target);
    meta["rows"] = profiles.rows.size();
    meta["flags"] = profiles.flags;
    // caller-supplied provenance (experiment hash, master seed, ...) sits at top level
    if (!extra_meta_json.empty()) {
        const auto extra = nlohmann::ordered_json::parse(extra_meta_json);
        for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = it.value();
    }
    std::ofstream out(path + ".meta.json", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write profile metadata for '" + path + "'");
    out << meta.dump(2) << '\n';
}

ProfileSet load_profiles(const std::string& path, const RatingMatrix& items) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open profile file '" + path + "'");
    std::unordered_map<std::string, ItemId> item_ids;
    for (ItemId v = 0; v < items.num_items(); ++v) item_ids.emplace(items.item_label(v), v);

    ProfileSet ps;
    std::string line;
    std::size_t line_no = 0;
    std::unordered_map<std::string, std::size_t> row_of;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string user, item, rating;
        if (!std::getline(ls, user, '\t') || !std::getline(ls, item, '\t') || !std::getline(ls, rating))
            throw ParseError(path, line_no, "expected fake_user_id<TAB>item<TAB>rating");
        auto it = item_ids.find(item);
        if (it == item_ids.end()) throw ParseError(path, line_no, "unknown item '" + item + "'");
        auto [rit, inserted] = row_of.try_emplace(user, ps.rows.size());
        if (inserted) ps.rows.emplace_back();
        ps.rows[rit->second].push_back({it->second, std::stod(rating)});
    }
    for (auto& row : ps.rows)
        std::sort(row.begin(), row.end(), [](const ItemRating& a, const ItemRating& b) { return a.item < b.item; });

    std::ifstream meta_in(path + ".meta.json");
    if (meta_in) {
        auto meta = nlohmann::json::parse(meta_in);
        ps.attack = meta.value("attack", "");
        ps.seed = meta.value("seed", std::uint64_t{0});
        ps.config_hash = meta.value("attack_config_hash", "");
        ps.flags = meta.value("flags", std::vector<std::string>{});
        auto t = item_ids.find(meta.value("target", ""));
        if (t != item_ids.end()) ps.target = t->second;
    }
    return ps;
}

}  // namespace aush
