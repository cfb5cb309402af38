#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aush/aush.hpp"
#include "aush/baselines.hpp"
#include "aush/detection.hpp"
#include "aush/victims.hpp"

namespace aush {

// ---- populations -------------------------------------------------------------

struct Population {
    std::vector<UserId> users;
    std::vector<std::string> flags;
};

// Users whose rating on every selected item is at least Q - step (4 or 5 on a
// 1-5 scale). An empty S selects everyone and is flagged.
Population in_segment_users(const RatingMatrix& m, std::span<const ItemId> selected);

double high_rating_threshold(const RatingScale& scale);

// ---- metrics -----------------------------------------------------------------

// Mean over users of after(u, target) - before(u, target) on clipped predictions.
double prediction_shift(const VictimModel& before, const VictimModel& after, ItemId target,
                        std::span<const UserId> users);

struct HitRatio {
    double value = 0.0;
    std::size_t evaluated = 0;  // users in the denominator
    std::size_t excluded = 0;   // users who already rated the target
    std::vector<std::string> flags;
};

// Fraction of users (minus those who rated the target in clean_train) whose
// top-K list contains the target.
HitRatio hit_ratio_at_k(const VictimModel& model, const RatingMatrix& clean_train, ItemId target, std::size_t k,
                        std::span<const UserId> users);

// ---- targets and selected items ------------------------------------------------

enum class TargetMode { Random, LongTail };
std::string to_string(TargetMode m);
TargetMode parse_target_mode(const std::string& s);

// n distinct items: uniform over all items, or over items with at most
// `threshold` ratings.
std::vector<ItemId> select_targets(const RatingMatrix& m, TargetMode mode, std::size_t n, std::size_t threshold,
                                   std::uint64_t seed);

// item label -> categories, read from `item<TAB>cat1|cat2|...`.
using ItemCategories = std::map<std::string, std::vector<std::string>>;
ItemCategories load_item_categories(const std::string& path);

// The `count` most-rated items sharing a category with the target (ties to
// the lower id), topped up from globally popular items when the categories
// run out or are unknown.
std::vector<ItemId> choose_selected_items(const RatingMatrix& m, ItemId target, std::size_t count,
                                          const ItemCategories* categories);

// ---- experiment ------------------------------------------------------------------

enum class AttackKind { Aush, Random, Average, Segment, Bandwagon, None };
std::string to_string(AttackKind k);
AttackKind parse_attack_kind(const std::string& s);

struct AttackSpec {
    AttackKind kind = AttackKind::Aush;
    std::string name;  // report label, defaults to the kind
    TrainingSchedule schedule;
    FillerStrategy strategy = FillerStrategy::Random;
    std::string loss_variant = "full";
};

struct Seeds {
    std::uint64_t victim = 1;
    std::uint64_t attack_train = 2;
    std::uint64_t attack_generate = 3;
};

struct SegmentMetrics {
    double prediction_shift = 0.0;
    double hr_before = 0.0;
    double hr_after = 0.0;
    std::size_t users = 0;
};

struct AttackReport {
    std::string attack;
    std::string victim;
    std::string target_label;
    ItemId target = 0;
    std::vector<std::string> selected_labels;
    std::size_t attack_size = 0;
    std::size_t filler_size = 0;
    std::size_t profile_size = 0;
    std::size_t k = 10;
    Seeds seeds;
    SegmentMetrics all_users;
    SegmentMetrics in_segment;
    std::optional<DetectionScores> detection;
    std::vector<std::string> flags;
    std::map<std::string, std::string> settings;  // decision flags and schedule echo
    std::map<std::string, double> runtimes_s;
    std::string config_hash;
    std::uint64_t master_seed = 0;
};

struct ExperimentSetup {
    const RatingMatrix* train = nullptr;  // clean training data
    VictimSpec victim;
    AttackSpec attack;
    AttackConfig config;  // target, selected set, budget
    std::size_t k = 10;
    Seeds seeds;
    bool score_detection = false;
};

struct ExperimentArtifacts {
    std::unique_ptr<VictimModel> clean_model;
    std::unique_ptr<VictimModel> attacked_model;
    ProfileSet profiles;
    std::optional<AushTrainingResult> aush;
};

// Generates the attack's profile set on the clean training data.
ProfileSet generate_attack(const ExperimentSetup& setup, std::optional<AushTrainingResult>* trained = nullptr);

// Pre/post metrics for an already generated profile set. `clean_model` may be
// passed to reuse a previously trained clean victim.
AttackReport evaluate_attack(const ExperimentSetup& setup, const ProfileSet& profiles,
                             const VictimModel* clean_model = nullptr, ExperimentArtifacts* artifacts = nullptr);

// Full pipeline: clean victim, profiles, injection, retraining, metrics.
AttackReport run_experiment(const ExperimentSetup& setup, ExperimentArtifacts* artifacts = nullptr);

// ---- aggregation & serialization ---------------------------------------------------

struct ReportSummary {
    std::string attack;
    std::string victim;
    std::string target_class;
    std::size_t targets = 0;
    // per-target metric then mean over targets
    SegmentMetrics all_users_mean;
    SegmentMetrics in_segment_mean;
    // users pooled across targets
    double all_users_pooled_ps = 0.0;
    double in_segment_pooled_ps = 0.0;
};

ReportSummary summarize(std::span<const AttackReport> reports, const std::string& target_class);

std::string report_to_json(const AttackReport& r);
AttackReport report_from_json(const std::string& text);
std::string summary_csv_header();
// One row per (population, metric).
std::string summary_csv_rows(const ReportSummary& s);

}  // namespace aush
