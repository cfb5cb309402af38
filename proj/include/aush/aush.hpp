#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aush/item_stats.hpp"
#include "aush/neural.hpp"
#include "aush/profile.hpp"
#include "aush/random.hpp"

namespace aush {

class NoEligibleTemplatesError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---- sampling --------------------------------------------------------------

enum class FillerStrategy { Random, Rating, Popularity, Similarity };

std::string to_string(FillerStrategy s);
FillerStrategy parse_filler_strategy(const std::string& s);

// Users with at least `profile_size` ratings.
std::vector<UserId> eligible_template_users(const RatingMatrix& m, std::size_t profile_size);

// `count` template users drawn uniformly from the eligible pool, distinct
// within the draw while count <= pool size. Larger draws concatenate
// independent random permutations of the pool.
std::vector<UserId> sample_templates(const RatingMatrix& m, std::size_t count, std::size_t profile_size, Rng& rng);

// Unnormalized per-candidate weights for a strategy: 1, r̄_v, |U_v| or
// |U_v ∩ U_S|.
std::vector<double> filler_weights(FillerStrategy strategy, std::span<const ItemId> candidates,
                                   const ItemStats& stats);

struct FillerDraw {
    std::vector<ItemId> items;
    bool fell_back_to_uniform = false;  // similarity weights ran out
};

// F distinct items from the user's rated items, excluding `excluded`
// (the selected set and target), drawn sequentially with strategy weights.
FillerDraw sample_fillers(const RatingMatrix& m, UserId u, FillerStrategy strategy, std::size_t filler_size,
                          const ItemStats& stats, std::span<const ItemId> excluded, Rng& rng);

/// Templates for one minibatch or one attack: the real users and the filler
/// ratings copied from their rows.
struct TemplateBatch {
    std::vector<UserId> users;
    std::vector<std::vector<ItemRating>> fillers;  // sorted by item, values copied from X
    std::size_t uniform_fallbacks = 0;
};

TemplateBatch make_template_batch(const RatingMatrix& m, std::span<const UserId> users, FillerStrategy strategy,
                                  std::size_t filler_size, const ItemStats& stats, std::span<const ItemId> excluded,
                                  Rng& rng);

// Dense |V| generator input for one template: filler ratings, zeros elsewhere.
std::vector<double> dense_filler_vector(std::span<const ItemRating> fillers, std::size_t num_items);

// ---- reconstruction targets --------------------------------------------------

struct ReconTarget {
    std::size_t slot;  // position in the selected list
    double value;      // true rating for S+, 0 for S-
};

struct ReconTargets {
    std::vector<std::vector<ItemId>> observed;    // S+ per template user
    std::vector<std::vector<ItemId>> unobserved;  // S- per template user
    std::vector<std::vector<ReconTarget>> targets;  // T = S+ ∪ S- per user
    std::vector<ItemId> shared_sample;            // the batch-wide S- draw
};

// S- is one shared draw per batch: ceil(m * k) items from the k selected items
// that at least one batch user has not rated; each user's S- is that draw
// minus the items the user did rate.
ReconTargets build_recon_targets(const RatingMatrix& m, std::span<const UserId> users,
                                 std::span<const ItemId> selected, double unobserved_fraction, Rng& rng);

// ---- losses ------------------------------------------------------------------
//
// `outputs` holds one row of |S| generated ratings per template user.

using BatchOutputs = std::vector<std::vector<double>>;

struct LossAndGrad {
    double value = 0.0;
    BatchOutputs grad;  // dLoss / d outputs
};

// mean over users of Σ_{j ∈ T_u} (out_j - x_j)^2
LossAndGrad reconstruction_loss(const BatchOutputs& outputs, const ReconTargets& targets);
// mean over users of Σ_{j ∈ S} (Q - out_j)^2
LossAndGrad shilling_loss(const BatchOutputs& outputs, double max_rating);

struct AdversarialTerms {
    double value = 0.0;          // H = E log D(real) + E log(1 - D(fake))
    std::vector<double> d_real;  // clamped discriminator outputs
    std::vector<double> d_fake;
};

double clamp_probability(double p, double eps);

// Discriminator outputs are clamped to [eps, 1 - eps] before taking logs.
AdversarialTerms adversarial_objective(const MlpNetwork& discriminator,
                                       const std::vector<std::vector<double>>& real_profiles,
                                       const std::vector<std::vector<double>>& fake_profiles, double eps = 1e-7);

// ---- networks ------------------------------------------------------------------

// [400,133,44,14,4] when |V| >= 400, otherwise a chain starting at ceil(|V|/3);
// each following layer is a third of the previous one (at least 1 unit).
std::vector<std::size_t> generator_hidden_sizes(std::size_t num_items, std::size_t num_hidden = 5);

MlpNetwork make_generator(std::size_t num_items, std::span<const std::size_t> hidden, std::size_t num_selected,
                          Rng& rng);
MlpNetwork make_discriminator(std::size_t num_items, Rng& rng);

struct AushModel {
    MlpNetwork generator;
    MlpNetwork discriminator;
    std::vector<ItemId> selected;
    RatingScale scale;

    // Continuous selected-item ratings min + (Q - min) * G(x).
    std::vector<double> selected_ratings(std::span<const double> filler_vector) const;
};

Checkpoint to_checkpoint(const AushModel& model);
AushModel aush_model_from_checkpoint(const Checkpoint& ck);

// ---- training -------------------------------------------------------------------

struct LossWeights {
    double adversarial = 1.0;
    double shilling = 1.0;
    double reconstruction = 1.0;
    bool operator==(const LossWeights&) const = default;
};

// Named loss subsets: "full", "adv", "rec", "rec+shill".
LossWeights loss_weights_for(const std::string& variant);

struct TrainingSchedule {
    std::size_t epochs = 150;
    std::size_t d_steps = 1;   // k1
    std::size_t g_steps = 1;   // k2
    std::size_t batch_size = 32;
    double unobserved_fraction = 0.5;  // m
    double learning_rate = 0.01;
    double clamp_eps = 1e-7;
    LossWeights weights;
    bool non_saturating = false;  // G minimizes -log D(fake) instead of log(1 - D(fake))

    void validate() const;
};

struct TrainingLogEntry {
    std::size_t epoch = 0;
    std::size_t step = 0;  // global update counter
    char phase = 'D';      // 'D' or 'G'
    double recon = 0.0;
    double shill = 0.0;
    double adversarial = 0.0;  // H
};

struct AushTrainingResult {
    AushModel model;
    std::vector<TrainingLogEntry> log;
    std::size_t d_updates = 0;
    std::size_t g_updates = 0;
    std::size_t uniform_fallbacks = 0;
};

// Alternates k1 discriminator ascent steps on H with k2 generator descent
// steps on w_adv*H + w_shill*L_shill + w_rec*L_recon, once per epoch.
AushTrainingResult train_aush(const RatingMatrix& m, const AttackConfig& cfg, const TrainingSchedule& sched,
                              FillerStrategy strategy, std::uint64_t seed);

// Line-delimited JSON: {"epoch":..,"step":..,"phase":"G","recon":..,"shill":..,"H":..}
std::string format_training_log(const std::vector<TrainingLogEntry>& log);

// ---- generation -----------------------------------------------------------------

struct PatchOptions {
    // Replace the copied filler ratings with a constant (segment degradation).
    std::optional<double> filler_rating;
};

// Fake profiles from given templates: copied fillers, generated S ratings
// snapped to the grid, and the target at its extreme rating.
std::vector<ProfileRow> patch_templates(const AushModel& model, const TemplateBatch& batch, const AttackConfig& cfg,
                                        std::size_t num_items, const PatchOptions& options = {});

// Samples exactly A templates and patches them.
ProfileSet generate_profiles(const AushModel& model, const RatingMatrix& m, const AttackConfig& cfg,
                             FillerStrategy strategy, std::uint64_t seed, const PatchOptions& options = {});

}  // namespace aush
