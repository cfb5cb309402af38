#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "aush/evaluation.hpp"

namespace aush {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DatasetConfig {
    std::string name = "dataset";
    std::string path;  // relative paths resolve against the config file's directory
    DatasetFormat format = DatasetFormat::TsvUirt;
    RatingScale scale = RatingScale::movielens();
    std::size_t min_user_ratings = 0;
    std::string split = "random";  // random | file | none
    double test_fraction = 0.1;
    std::string test_path;
    std::string categories_path;  // optional item<TAB>cat|cat file

    bool operator==(const DatasetConfig&) const = default;
};

struct AttackEntry {
    AttackSpec spec;
    std::size_t attack_size = 50;
    std::size_t filler_size = 90;
    std::size_t profile_size = 0;  // 0 until validated, then F + |S| + 1
    bool push = true;

    const std::string& name() const { return spec.name; }
};

struct TargetConfig {
    TargetMode mode = TargetMode::LongTail;
    std::size_t count = 5;
    std::size_t threshold = 1;
    std::vector<std::string> items;  // explicit target labels override sampling

    bool operator==(const TargetConfig&) const = default;
};

struct SelectedConfig {
    std::size_t size = 3;
    std::vector<std::string> items;  // explicit S labels, shared by every target

    bool operator==(const SelectedConfig&) const = default;
};

struct DetectionConfig {
    bool enabled = true;
    std::size_t profiles = 0;  // 0: one fake profile per real user
    bool include_target = true;
    bool halved = false;

    bool operator==(const DetectionConfig&) const = default;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    std::vector<VictimSpec> victims;
    std::vector<AttackEntry> attacks;
    TargetConfig targets;
    SelectedConfig selected;
    DetectionConfig detection;
    std::size_t k = 10;
    std::string output_dir = "out";
    std::uint64_t seed = 42;
    std::string base_dir = ".";  // not serialized

    std::string resolve(const std::string& path) const;
    // Hash of the canonical dump.
    std::string hash() const;
};

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

// Strict: unknown keys, wrong types, missing required fields and budget
// violations throw ConfigError naming the offending key.
ExperimentConfig parse_config_text(const std::string& text, const std::string& base_dir = ".",
                                   bool check_files = false);
ExperimentConfig parse_config(const std::string& path);
// Canonical JSON with every default written out.
std::string dump_config(const ExperimentConfig& cfg);

// Named substreams of the master seed.
Seeds experiment_seeds(std::uint64_t master, const std::string& attack, VictimKind victim,
                       const std::string& target_label);
std::uint64_t victim_seed(std::uint64_t master, VictimKind victim);
std::uint64_t detection_seed(std::uint64_t master, const std::string& attack, const std::string& part);

}  // namespace aush
