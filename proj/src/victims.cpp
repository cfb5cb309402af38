#include "aush/victims.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace aush {

namespace {

bool window_converged(const std::vector<double>& loss, std::size_t window, double tol) {
    if (loss.size() <= window) return false;
    const double improvement = (loss[loss.size() - 1 - window] - loss.back()) / static_cast<double>(window);
    return improvement < tol;
}

void put_scale(Checkpoint& ck, const RatingScale& s, std::size_t users, std::size_t items) {
    ck.meta["scale.min"] = std::to_string(s.min_rating);
    ck.meta["scale.max"] = std::to_string(s.max_rating);
    ck.meta["scale.step"] = std::to_string(s.step);
    ck.meta["users"] = std::to_string(users);
    ck.meta["items"] = std::to_string(items);
}

RatingScale get_scale(const Checkpoint& ck) {
    return RatingScale(std::stod(ck.meta_value("scale.min")), std::stod(ck.meta_value("scale.max")),
                       std::stod(ck.meta_value("scale.step")));
}

}  // namespace

// ---- VictimModel -----------------------------------------------------------

std::vector<double> VictimModel::predict_all_raw(UserId u) const {
    std::vector<double> out(num_items_);
    for (ItemId v = 0; v < num_items_; ++v) out[v] = predict_raw(u, v);
    return out;
}

double VictimModel::predict(UserId u, ItemId v) const {
    check_ids(u, v);
    return scale_.clip(predict_raw(u, v));
}

std::vector<double> VictimModel::predict_all(UserId u) const {
    auto raw = predict_all_raw(u);
    for (double& r : raw) r = scale_.clip(r);
    return raw;
}

void VictimModel::check_ids(UserId u, ItemId v) const {
    if (u >= num_users_) throw std::out_of_range("unknown user id " + std::to_string(u));
    if (v >= num_items_) throw std::out_of_range("unknown item id " + std::to_string(v));
}

// ---- NMF -------------------------------------------------------------------

NmfModel::NmfModel(std::size_t users, std::size_t items, std::size_t factors, RatingScale scale)
    : factors_(factors), p_(users * factors, 0.0), q_(items * factors, 0.0) {
    num_users_ = users;
    num_items_ = items;
    scale_ = scale;
}

double NmfModel::predict_raw(UserId u, ItemId v) const {
    check_ids(u, v);
    const double* pu = &p_[u * factors_];
    const double* qv = &q_[v * factors_];
    double s = 0.0;
    for (std::size_t f = 0; f < factors_; ++f) s += pu[f] * qv[f];
    return s;
}

Checkpoint NmfModel::checkpoint() const {
    Checkpoint ck;
    ck.kind = "nmf";
    put_scale(ck, scale_, num_users_, num_items_);
    ck.meta["factors"] = std::to_string(factors_);
    ck.tensors.push_back({"P", Tensor{num_users_, factors_, p_}});
    ck.tensors.push_back({"Q", Tensor{num_items_, factors_, q_}});
    return ck;
}

NmfModel NmfModel::from_checkpoint(const Checkpoint& ck) {
    if (ck.kind != "nmf") throw std::runtime_error("checkpoint kind '" + ck.kind + "' is not nmf");
    const auto& P = ck.tensor("P");
    const auto& Q = ck.tensor("Q");
    if (P.cols != Q.cols) throw std::runtime_error("nmf checkpoint: factor dims differ");
    NmfModel m(P.rows, Q.rows, P.cols, get_scale(ck));
    m.p_ = P.values;
    m.q_ = Q.values;
    return m;
}

NmfModel fit_nmf(const RatingMatrix& train, const NmfConfig& cfg, std::uint64_t seed) {
    if (cfg.factors < 1) throw std::invalid_argument("fit_nmf: factors must be >= 1");
    NmfModel model(train.num_users(), train.num_items(), cfg.factors, train.scale());
    Rng rng(seed);

    auto entries = train.triples();
    double mean = 0.0;
    for (const auto& t : entries) mean += t.rating;
    mean = entries.empty() ? train.scale().max_rating / 2 : mean / static_cast<double>(entries.size());
    // E[p.q] = mean at initialization
    const double hi = 2.0 * std::sqrt(mean / static_cast<double>(cfg.factors));
    std::uniform_real_distribution<double> init(0.0, hi);
    for (double& x : model.p_) x = init(rng);
    for (double& x : model.q_) x = init(rng);

    const std::size_t d = cfg.factors;
    std::vector<std::size_t> order(entries.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Checkpoint last_stable = model.checkpoint();

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t idx : order) {
            const auto& t = entries[idx];
            double* pu = &model.p_[t.user * d];
            double* qv = &model.q_[t.item * d];
            double pred = 0.0;
            for (std::size_t f = 0; f < d; ++f) pred += pu[f] * qv[f];
            const double err = t.rating - pred;
            for (std::size_t f = 0; f < d; ++f) {
                const double pf = pu[f];
                const double qf = qv[f];
                pu[f] = std::max(0.0, pf + cfg.learning_rate * (err * qf - cfg.reg * pf));
                qv[f] = std::max(0.0, qf + cfg.learning_rate * (err * pf - cfg.reg * qf));
            }
        }
        double loss = 0.0;
        for (const auto& t : entries) {
            const double e = t.rating - model.predict_raw(t.user, t.item);
            loss += e * e;
        }
        double norm = 0.0;
        for (double x : model.p_) norm += x * x;
        for (double x : model.q_) norm += x * x;
        loss = (entries.empty() ? 0.0 : loss / static_cast<double>(entries.size())) +
               0.5 * cfg.reg * norm / static_cast<double>(std::max<std::size_t>(1, entries.size()));
        if (!std::isfinite(loss))
            throw TrainingDivergedError("fit_nmf: loss became non-finite at epoch " + std::to_string(epoch),
                                        std::move(last_stable));
        last_stable = model.checkpoint();
        model.trace_.epoch_loss.push_back(loss);
        if (window_converged(model.trace_.epoch_loss, cfg.window, cfg.tolerance)) {
            model.trace_.converged = true;
            break;
        }
    }
    return model;
}

// ---- AutoRec ---------------------------------------------------------------

namespace {

// Rows of the reconstruction problem as (index, value) lists.
std::vector<std::vector<std::pair<std::size_t, double>>> autorec_rows(const RatingMatrix& m, AutoRecAxis axis) {
    std::vector<std::vector<std::pair<std::size_t, double>>> rows;
    if (axis == AutoRecAxis::User) {
        rows.resize(m.num_users());
        for (UserId u = 0; u < m.num_users(); ++u)
            for (const auto& e : m.user_ratings(u)) rows[u].push_back({e.item, e.rating});
    } else {
        rows.resize(m.num_items());
        for (ItemId v = 0; v < m.num_items(); ++v)
            for (const auto& e : m.item_ratings(v)) rows[v].push_back({e.user, e.rating});
    }
    return rows;
}

void encode(const MlpNetwork& net, const std::vector<std::pair<std::size_t, double>>& row, double* h) {
    const auto& enc = net.layer(0);
    for (std::size_t o = 0; o < enc.out; ++o) {
        double z = enc.bias[o];
        const double* w = &enc.weights[o * enc.in];
        for (const auto& [i, r] : row) z += w[i] * r;
        h[o] = sigmoid(z);
    }
}

double decode_one(const MlpNetwork& net, const double* h, std::size_t j) {
    const auto& dec = net.layer(1);
    const double* w = &dec.weights[j * dec.in];
    double z = dec.bias[j];
    for (std::size_t o = 0; o < dec.in; ++o) z += w[o] * h[o];
    return z;
}

}  // namespace

AutoRecModel::AutoRecModel(AutoRecAxis axis, MlpNetwork net, const RatingMatrix& train)
    : axis_(axis), net_(std::move(net)) {
    num_users_ = train.num_users();
    num_items_ = train.num_items();
    scale_ = train.scale();
    cache_codes(train);
}

void AutoRecModel::cache_codes(const RatingMatrix& train) {
    const auto rows = autorec_rows(train, axis_);
    const std::size_t hidden = net_.layer(0).out;
    codes_.assign(rows.size() * hidden, 0.0);
    for (std::size_t r = 0; r < rows.size(); ++r) encode(net_, rows[r], &codes_[r * hidden]);
}

double AutoRecModel::predict_raw(UserId u, ItemId v) const {
    check_ids(u, v);
    const std::size_t hidden = net_.layer(0).out;
    if (axis_ == AutoRecAxis::User) return decode_one(net_, &codes_[u * hidden], v);
    return decode_one(net_, &codes_[v * hidden], u);
}

std::vector<double> AutoRecModel::predict_all_raw(UserId u) const {
    if (u >= num_users_) throw std::out_of_range("unknown user id " + std::to_string(u));
    std::vector<double> out(num_items_);
    const std::size_t hidden = net_.layer(0).out;
    for (ItemId v = 0; v < num_items_; ++v)
        out[v] = axis_ == AutoRecAxis::User ? decode_one(net_, &codes_[u * hidden], v)
                                            : decode_one(net_, &codes_[v * hidden], u);
    return out;
}

Checkpoint AutoRecModel::checkpoint() const {
    Checkpoint ck;
    ck.kind = "autorec";
    put_scale(ck, scale_, num_users_, num_items_);
    ck.meta["axis"] = axis_ == AutoRecAxis::User ? "user" : "item";
    append_network(ck, net_, "net.");
    const std::size_t hidden = net_.layer(0).out;
    ck.tensors.push_back({"codes", Tensor{codes_.size() / hidden, hidden, codes_}});
    return ck;
}

AutoRecModel AutoRecModel::from_checkpoint(const Checkpoint& ck) {
    if (ck.kind != "autorec") throw std::runtime_error("checkpoint kind '" + ck.kind + "' is not autorec");
    AutoRecModel m;
    m.axis_ = ck.meta_value("axis") == "user" ? AutoRecAxis::User : AutoRecAxis::Item;
    m.net_ = network_from_checkpoint(ck, "net.");
    m.codes_ = ck.tensor("codes").values;
    m.scale_ = get_scale(ck);
    m.num_users_ = std::stoul(ck.meta_value("users"));
    m.num_items_ = std::stoul(ck.meta_value("items"));
    return m;
}

double autorec_objective(const MlpNetwork& net, const RatingMatrix& train, AutoRecAxis axis, double reg) {
    const auto rows = autorec_rows(train, axis);
    std::vector<double> h(net.layer(0).out);
    double loss = 0.0;
    for (const auto& row : rows) {
        encode(net, row, h.data());
        for (const auto& [j, r] : row) {
            const double e = decode_one(net, h.data(), j) - r;
            loss += e * e;
        }
    }
    loss += 0.5 * reg * weight_norm_sq(net);
    return rows.empty() ? loss : loss / static_cast<double>(rows.size());
}

AutoRecModel fit_autorec(const RatingMatrix& train, const AutoRecConfig& cfg, std::uint64_t seed) {
    if (cfg.hidden < 1) throw std::invalid_argument("fit_autorec: hidden dim must be >= 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("fit_autorec: batch size must be >= 1");
    const auto rows = autorec_rows(train, cfg.axis);
    const std::size_t width = cfg.axis == AutoRecAxis::User ? train.num_items() : train.num_users();
    if (rows.empty() || width == 0) throw std::invalid_argument("fit_autorec: empty training matrix");

    Rng rng(seed);
    const std::size_t dims[] = {width, cfg.hidden, width};
    MlpNetwork net = MlpNetwork::create(dims, Activation::Sigmoid, Activation::Identity, rng);
    AdamState adam(net, cfg.learning_rate);
    MlpGradients grads = net.zero_gradients();
    TrainingTrace trace;

    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> h(cfg.hidden), dh(cfg.hidden);
    const double n_rows = static_cast<double>(rows.size());
    Checkpoint last_stable = to_checkpoint(net, "autorec-net");

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const double batch = static_cast<double>(end - start);
            for (auto& w : grads.weights) std::fill(w.begin(), w.end(), 0.0);
            for (auto& b : grads.bias) std::fill(b.begin(), b.end(), 0.0);
            const auto& enc = net.layer(0);
            const auto& dec = net.layer(1);
            for (std::size_t k = start; k < end; ++k) {
                const auto& row = rows[order[k]];
                encode(net, row, h.data());
                std::fill(dh.begin(), dh.end(), 0.0);
                for (const auto& [j, r] : row) {
                    const double g = 2.0 * (decode_one(net, h.data(), j) - r) / batch;
                    double* gw = &grads.weights[1][j * dec.in];
                    const double* w = &dec.weights[j * dec.in];
                    for (std::size_t o = 0; o < dec.in; ++o) {
                        gw[o] += g * h[o];
                        dh[o] += g * w[o];
                    }
                    grads.bias[1][j] += g;
                }
                for (std::size_t o = 0; o < enc.out; ++o) {
                    const double dz = dh[o] * h[o] * (1.0 - h[o]);
                    grads.bias[0][o] += dz;
                    double* gw = &grads.weights[0][o * enc.in];
                    for (const auto& [i, r] : row) gw[i] += dz * r;
                }
            }
            // gradient of (reg/2)||W||^2 / n_rows, matching the per-row objective
            add_weight_decay(net, grads, cfg.reg / n_rows);
            adam_update(net, grads, adam);
        }
        const double loss = autorec_objective(net, train, cfg.axis, cfg.reg);
        if (!std::isfinite(loss))
            throw TrainingDivergedError("fit_autorec: loss became non-finite at epoch " + std::to_string(epoch),
                                        std::move(last_stable));
        last_stable = to_checkpoint(net, "autorec-net");
        trace.epoch_loss.push_back(loss);
        if (window_converged(trace.epoch_loss, cfg.window, cfg.tolerance)) {
            trace.converged = true;
            break;
        }
    }
    AutoRecModel model(cfg.axis, std::move(net), train);
    model.trace_ = std::move(trace);
    return model;
}

// ---- factory / ranking -----------------------------------------------------

std::string to_string(VictimKind k) {
    switch (k) {
        case VictimKind::Nmf: return "nmf";
        case VictimKind::UserAutoRec: return "u-autorec";
        case VictimKind::ItemAutoRec: return "i-autorec";
    }
    return "?";
}

VictimKind parse_victim_kind(const std::string& s) {
    if (s == "nmf") return VictimKind::Nmf;
    if (s == "u-autorec") return VictimKind::UserAutoRec;
    if (s == "i-autorec") return VictimKind::ItemAutoRec;
    throw std::invalid_argument("unknown victim model '" + s + "' (expected nmf, u-autorec, i-autorec)");
}

std::unique_ptr<VictimModel> train_victim(const VictimSpec& spec, const RatingMatrix& train, std::uint64_t seed) {
    switch (spec.kind) {
        case VictimKind::Nmf: return std::make_unique<NmfModel>(fit_nmf(train, spec.nmf, seed));
        case VictimKind::UserAutoRec: {
            auto cfg = spec.autorec;
            cfg.axis = AutoRecAxis::User;
            return std::make_unique<AutoRecModel>(fit_autorec(train, cfg, seed));
        }
        case VictimKind::ItemAutoRec: {
            auto cfg = spec.autorec;
            cfg.axis = AutoRecAxis::Item;
            return std::make_unique<AutoRecModel>(fit_autorec(train, cfg, seed));
        }
    }
    throw std::invalid_argument("train_victim: bad kind");
}

std::unique_ptr<VictimModel> load_victim(const Checkpoint& ck) {
    if (ck.kind == "nmf") return std::make_unique<NmfModel>(NmfModel::from_checkpoint(ck));
    if (ck.kind == "autorec") return std::make_unique<AutoRecModel>(AutoRecModel::from_checkpoint(ck));
    throw std::runtime_error("unknown victim checkpoint kind '" + ck.kind + "'");
}

TopK top_k(const VictimModel& model, const RatingMatrix& clean_train, UserId u, std::size_t k) {
    if (k < 1) throw std::invalid_argument("top_k: K must be >= 1");
    if (u >= clean_train.num_users()) throw std::out_of_range("top_k: user not in clean training data");
    const auto scores = model.predict_all_raw(u);
    std::vector<ItemId> candidates;
    candidates.reserve(clean_train.num_items());
    {
        auto rated = clean_train.user_ratings(u);
        std::size_t r = 0;
        for (ItemId v = 0; v < clean_train.num_items(); ++v) {
            while (r < rated.size() && rated[r].item < v) ++r;
            if (r < rated.size() && rated[r].item == v) continue;
            candidates.push_back(v);
        }
    }
    auto better = [&](ItemId a, ItemId b) { return scores[a] != scores[b] ? scores[a] > scores[b] : a < b; };
    TopK out;
    const std::size_t take = std::min(k, candidates.size());
    out.short_list = take < k;
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(),
                      better);
    out.items.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take));
    return out;
}

}  // namespace aush
