#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "aush/neural.hpp"
#include "aush/rating_matrix.hpp"

namespace aush {

class TrainingDivergedError : public std::runtime_error {
public:
    TrainingDivergedError(const std::string& what, Checkpoint last_stable)
        : std::runtime_error(what), last_stable_(std::move(last_stable)) {}
    const Checkpoint& last_stable() const { return last_stable_; }

private:
    Checkpoint last_stable_;
};

// Per-epoch training objective plus the reason training stopped.
struct TrainingTrace {
    std::vector<double> epoch_loss;
    bool converged = false;
};

/// Rating predictor trained on an explicit-feedback matrix.
///
/// predict() is clipped into the rating scale; predict_raw() is the model's
/// unclipped score, which top-K ranking uses so that items saturating at the
/// scale maximum keep their order.
class VictimModel {
public:
    virtual ~VictimModel() = default;

    virtual std::string name() const = 0;
    virtual double predict_raw(UserId u, ItemId v) const = 0;
    virtual std::vector<double> predict_all_raw(UserId u) const;
    virtual Checkpoint checkpoint() const = 0;

    double predict(UserId u, ItemId v) const;
    std::vector<double> predict_all(UserId u) const;

    std::size_t num_users() const { return num_users_; }
    std::size_t num_items() const { return num_items_; }
    const RatingScale& scale() const { return scale_; }
    const TrainingTrace& trace() const { return trace_; }

protected:
    void check_ids(UserId u, ItemId v) const;

    std::size_t num_users_ = 0;
    std::size_t num_items_ = 0;
    RatingScale scale_;
    TrainingTrace trace_;
};

// ---- NMF -------------------------------------------------------------------

struct NmfConfig {
    std::size_t factors = 16;
    std::size_t max_epochs = 200;
    double learning_rate = 0.005;
    double reg = 0.02;
    double tolerance = 1e-5;   // mean per-epoch improvement over the window
    std::size_t window = 5;
};

class NmfModel final : public VictimModel {
public:
    NmfModel(std::size_t users, std::size_t items, std::size_t factors, RatingScale scale);

    std::string name() const override { return "nmf"; }
    double predict_raw(UserId u, ItemId v) const override;
    Checkpoint checkpoint() const override;
    static NmfModel from_checkpoint(const Checkpoint& ck);

    std::size_t factors() const { return factors_; }
    std::vector<double>& user_factors() { return p_; }
    std::vector<double>& item_factors() { return q_; }
    const std::vector<double>& user_factors() const { return p_; }
    const std::vector<double>& item_factors() const { return q_; }

    friend NmfModel fit_nmf(const RatingMatrix&, const NmfConfig&, std::uint64_t);

private:
    std::size_t factors_;
    std::vector<double> p_;  // users x factors
    std::vector<double> q_;  // items x factors
};

// Projected SGD on observed entries: squared error + L2, factors clamped at 0.
NmfModel fit_nmf(const RatingMatrix& train, const NmfConfig& cfg, std::uint64_t seed);

// ---- AutoRec ---------------------------------------------------------------

enum class AutoRecAxis { User, Item };

struct AutoRecConfig {
    AutoRecAxis axis = AutoRecAxis::Item;
    std::size_t hidden = 100;
    std::size_t max_epochs = 200;
    double learning_rate = 0.005;
    double reg = 0.01;
    std::size_t batch_size = 32;
    double tolerance = 1e-5;
    std::size_t window = 5;
};

class AutoRecModel final : public VictimModel {
public:
    AutoRecModel(AutoRecAxis axis, MlpNetwork net, const RatingMatrix& train);

    std::string name() const override { return axis_ == AutoRecAxis::User ? "u-autorec" : "i-autorec"; }
    double predict_raw(UserId u, ItemId v) const override;
    std::vector<double> predict_all_raw(UserId u) const override;
    Checkpoint checkpoint() const override;
    static AutoRecModel from_checkpoint(const Checkpoint& ck);

    AutoRecAxis axis() const { return axis_; }
    const MlpNetwork& network() const { return net_; }

    friend AutoRecModel fit_autorec(const RatingMatrix&, const AutoRecConfig&, std::uint64_t);

private:
    AutoRecModel() = default;
    void cache_codes(const RatingMatrix& train);

    AutoRecAxis axis_ = AutoRecAxis::Item;
    MlpNetwork net_;
    std::vector<double> codes_;  // rows x hidden, hidden code of each training row
};

AutoRecModel fit_autorec(const RatingMatrix& train, const AutoRecConfig& cfg, std::uint64_t seed);

// Sum over rows of the squared reconstruction error on observed entries plus
// reg/2 * ||W||^2, divided by the number of rows. This is the quantity logged
// per epoch.
double autorec_objective(const MlpNetwork& net, const RatingMatrix& train, AutoRecAxis axis, double reg);

// ---- common ----------------------------------------------------------------

enum class VictimKind { Nmf, UserAutoRec, ItemAutoRec };

std::string to_string(VictimKind k);
VictimKind parse_victim_kind(const std::string& s);

struct VictimSpec {
    VictimKind kind = VictimKind::Nmf;
    NmfConfig nmf;
    AutoRecConfig autorec;
};

std::unique_ptr<VictimModel> train_victim(const VictimSpec& spec, const RatingMatrix& train, std::uint64_t seed);
std::unique_ptr<VictimModel> load_victim(const Checkpoint& ck);

struct TopK {
    std::vector<ItemId> items;
    bool short_list = false;  // fewer than K candidates existed
};

// K best items by raw score among items `u` has not rated in `clean_train`;
// ties go to the lower item id.
TopK top_k(const VictimModel& model, const RatingMatrix& clean_train, UserId u, std::size_t k);

}  // namespace aush
