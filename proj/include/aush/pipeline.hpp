#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "aush/config.hpp"

namespace aush {

// Carries the failing stage's name in front of the original message.
class StageError : public std::runtime_error {
public:
    StageError(const std::string& stage, const std::string& what)
        : std::runtime_error("[" + stage + "] " + what), stage_(stage) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

/// Artifact layout under the output directory:
///
///   config.json                       resolved config
///   data/{train,test}.tsv             split ratings (+ .meta.json)
///   data/{users,items}.txt            id order of the prepared matrices
///   data/targets.json                 targets and their selected sets
///   victims/<victim>.ckpt             clean victim checkpoints
///   models/<attack>__<target>.ckpt    trained AUSH generator/discriminator (+ .log.jsonl)
///   profiles/<attack>__<target>.tsv   attack profiles (+ .meta.json)
///   detection/<attack>.tsv            detection-size profile sets (+ .meta.json)
///   detection.csv                     attack,dataset,tvd,js (+ .meta.json)
///   reports/<attack>__<victim>__<target>.json
///   reports.jsonl, summary.csv        merged records and the flat summary (+ .meta.json)
struct RunContext {
    ExperimentConfig config;
    std::string out_dir;
    std::size_t workers = 1;
    bool quiet = false;
};

struct TargetPlan {
    ItemId target = 0;
    std::vector<ItemId> selected;
};

// Loaded products of prepare-data.
struct PreparedData {
    RatingMatrix train;
    RatingMatrix test;
    std::vector<TargetPlan> targets;
};

void stage_prepare(const RunContext& ctx);
PreparedData load_prepared(const RunContext& ctx);
void stage_train_victims(const RunContext& ctx);
void stage_generate_attacks(const RunContext& ctx);
void stage_detect(const RunContext& ctx);
// `profiles_dir` empty means <out>/profiles.
std::vector<AttackReport> stage_evaluate(const RunContext& ctx, const std::string& profiles_dir = "");
std::vector<AttackReport> run_all(const RunContext& ctx);

std::string profile_path(const RunContext& ctx, const std::string& attack, const std::string& target_label,
                         const std::string& profiles_dir = "");

// Runs fn(0..n-1) on up to `workers` threads; the first exception is rethrown.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace aush
