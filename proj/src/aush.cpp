#include "aush/aush.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "aush/baselines.hpp"

namespace aush {

// ---- sampling --------------------------------------------------------------

std::string to_string(FillerStrategy s) {
    switch (s) {
        case FillerStrategy::Random: return "random";
        case FillerStrategy::Rating: return "rating";
        case FillerStrategy::Popularity: return "popularity";
        case FillerStrategy::Similarity: return "similarity";
    }
    return "?";
}

FillerStrategy parse_filler_strategy(const std::string& s) {
    if (s == "random") return FillerStrategy::Random;
    if (s == "rating") return FillerStrategy::Rating;
    if (s == "popularity") return FillerStrategy::Popularity;
    if (s == "similarity") return FillerStrategy::Similarity;
    throw std::invalid_argument("unknown filler sampling strategy '" + s + "'");
}

std::vector<UserId> eligible_template_users(const RatingMatrix& m, std::size_t profile_size) {
    std::vector<UserId> out;
    for (UserId u = 0; u < m.num_users(); ++u)
        if (m.user_ratings(u).size() >= profile_size) out.push_back(u);
    return out;
}

namespace {

std::vector<UserId> draw_users(std::span<const UserId> pool, std::size_t count, Rng& rng) {
    std::vector<UserId> out;
    out.reserve(count);
    while (out.size() < count) {
        const std::size_t take = std::min(count - out.size(), pool.size());
        for (auto i : sample_without_replacement(pool.size(), take, rng)) out.push_back(pool[i]);
    }
    return out;
}

}  // namespace

std::vector<UserId> sample_templates(const RatingMatrix& m, std::size_t count, std::size_t profile_size, Rng& rng) {
    const auto pool = eligible_template_users(m, profile_size);
    if (pool.empty())
        throw NoEligibleTemplatesError("no user has at least P=" + std::to_string(profile_size) + " ratings");
    return draw_users(pool, count, rng);
}

std::vector<double> filler_weights(FillerStrategy strategy, std::span<const ItemId> candidates,
                                   const ItemStats& stats) {
    std::vector<double> w(candidates.size(), 1.0);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const ItemId v = candidates[i];
        switch (strategy) {
            case FillerStrategy::Random: break;
            case FillerStrategy::Rating: w[i] = stats.mean[v]; break;
            case FillerStrategy::Popularity: w[i] = static_cast<double>(stats.popularity[v]); break;
            case FillerStrategy::Similarity: w[i] = static_cast<double>(stats.co_raters[v]); break;
        }
    }
    return w;
}

FillerDraw sample_fillers(const RatingMatrix& m, UserId u, FillerStrategy strategy, std::size_t filler_size,
                          const ItemStats& stats, std::span<const ItemId> excluded, Rng& rng) {
    std::vector<ItemId> candidates;
    for (const auto& e : m.user_ratings(u))
        if (std::find(excluded.begin(), excluded.end(), e.item) == excluded.end()) candidates.push_back(e.item);
    if (candidates.size() < filler_size)
        throw BudgetError("user " + m.user_label(u) + " has " + std::to_string(candidates.size()) +
                          " candidate fillers, need F=" + std::to_string(filler_size));
    FillerDraw draw;
    const auto weights = filler_weights(strategy, candidates, stats);
    const auto positive = static_cast<std::size_t>(std::count_if(weights.begin(), weights.end(), [](double w) { return w > 0.0; }));
    draw.fell_back_to_uniform = positive < filler_size;
    for (auto i : weighted_sample_without_replacement(weights, filler_size, rng)) draw.items.push_back(candidates[i]);
    return draw;
}

TemplateBatch make_template_batch(const RatingMatrix& m, std::span<const UserId> users, FillerStrategy strategy,
                                  std::size_t filler_size, const ItemStats& stats, std::span<const ItemId> excluded,
                                  Rng& rng) {
    TemplateBatch batch;
    batch.users.assign(users.begin(), users.end());
    for (UserId u : users) {
        auto draw = sample_fillers(m, u, strategy, filler_size, stats, excluded, rng);
        if (draw.fell_back_to_uniform) ++batch.uniform_fallbacks;
        std::sort(draw.items.begin(), draw.items.end());
        std::vector<ItemRating> row;
        row.reserve(draw.items.size());
        for (ItemId v : draw.items) row.push_back({v, m.rating(u, v)});
        batch.fillers.push_back(std::move(row));
    }
    return batch;
}

std::vector<double> dense_filler_vector(std::span<const ItemRating> fillers, std::size_t num_items) {
    std::vector<double> x(num_items, 0.0);
    for (const auto& e : fillers) x.at(e.item) = e.rating;
    return x;
}

// ---- reconstruction targets ------------------------------------------------

ReconTargets build_recon_targets(const RatingMatrix& m, std::span<const UserId> users,
                                 std::span<const ItemId> selected, double unobserved_fraction, Rng& rng) {
    if (!(unobserved_fraction > 0.0 && unobserved_fraction <= 1.0))
        throw std::invalid_argument("build_recon_targets: m must be in (0, 1]");
    ReconTargets t;
    std::vector<char> unobserved_somewhere(selected.size(), 0);
    for (UserId u : users) {
        std::vector<ItemId> obs;
        for (std::size_t j = 0; j < selected.size(); ++j) {
            if (m.has_rating(u, selected[j])) obs.push_back(selected[j]);
            else unobserved_somewhere[j] = 1;
        }
        t.observed.push_back(std::move(obs));
    }
    std::vector<ItemId> pool;
    for (std::size_t j = 0; j < selected.size(); ++j)
        if (unobserved_somewhere[j]) pool.push_back(selected[j]);
    const auto want = static_cast<std::size_t>(
        std::ceil(unobserved_fraction * static_cast<double>(pool.size()) - 1e-12));
    for (auto i : sample_without_replacement(pool.size(), std::min(want, pool.size()), rng))
        t.shared_sample.push_back(pool[i]);
    std::sort(t.shared_sample.begin(), t.shared_sample.end());

    for (std::size_t k = 0; k < users.size(); ++k) {
        std::vector<ItemId> neg;
        std::vector<ReconTarget> tgt;
        for (std::size_t j = 0; j < selected.size(); ++j) {
            const ItemId v = selected[j];
            if (m.has_rating(users[k], v)) {
                tgt.push_back({j, m.rating(users[k], v)});
            } else if (std::binary_search(t.shared_sample.begin(), t.shared_sample.end(), v)) {
                neg.push_back(v);
                tgt.push_back({j, 0.0});
            }
        }
        t.unobserved.push_back(std::move(neg));
        t.targets.push_back(std::move(tgt));
    }
    return t;
}

// ---- losses ----------------------------------------------------------------

LossAndGrad reconstruction_loss(const BatchOutputs& outputs, const ReconTargets& targets) {
    if (outputs.size() != targets.targets.size())
        throw std::invalid_argument("reconstruction_loss: batch size mismatch");
    LossAndGrad r;
    r.grad.resize(outputs.size());
    if (outputs.empty()) return r;
    const double inv = 1.0 / static_cast<double>(outputs.size());
    for (std::size_t u = 0; u < outputs.size(); ++u) {
        r.grad[u].assign(outputs[u].size(), 0.0);
        for (const auto& t : targets.targets[u]) {
            const double d = outputs[u].at(t.slot) - t.value;
            r.value += inv * d * d;
            r.grad[u][t.slot] += inv * 2.0 * d;
        }
    }
    return r;
}

LossAndGrad shilling_loss(const BatchOutputs& outputs, double max_rating) {
    LossAndGrad r;
    r.grad.resize(outputs.size());
    if (outputs.empty()) return r;
    const double inv = 1.0 / static_cast<double>(outputs.size());
    for (std::size_t u = 0; u < outputs.size(); ++u) {
        r.grad[u].assign(outputs[u].size(), 0.0);
        for (std::size_t j = 0; j < outputs[u].size(); ++j) {
            const double d = max_rating - outputs[u][j];
            r.value += inv * d * d;
            r.grad[u][j] = -inv * 2.0 * d;
        }
    }
    return r;
}

double clamp_probability(double p, double eps) { return std::clamp(p, eps, 1.0 - eps); }

AdversarialTerms adversarial_objective(const MlpNetwork& discriminator,
                                       const std::vector<std::vector<double>>& real_profiles,
                                       const std::vector<std::vector<double>>& fake_profiles, double eps) {
    if (real_profiles.empty() || fake_profiles.empty())
        throw std::invalid_argument("adversarial_objective: needs real and fake profiles");
    AdversarialTerms t;
    double real_term = 0.0, fake_term = 0.0;
    for (const auto& x : real_profiles) {
        const double d = clamp_probability(mlp_forward(discriminator, x).output()[0], eps);
        t.d_real.push_back(d);
        real_term += std::log(d);
    }
    for (const auto& x : fake_profiles) {
        const double d = clamp_probability(mlp_forward(discriminator, x).output()[0], eps);
        t.d_fake.push_back(d);
        fake_term += std::log(1.0 - d);
    }
    t.value = real_term / static_cast<double>(real_profiles.size()) +
              fake_term / static_cast<double>(fake_profiles.size());
    return t;
}

// ---- networks ----------------------------------------------------------------

std::vector<std::size_t> generator_hidden_sizes(std::size_t num_items, std::size_t num_hidden) {
    std::vector<std::size_t> sizes;
    if (num_hidden == 0) return sizes;
    sizes.push_back(num_items >= 400 ? 400 : std::max<std::size_t>(1, (num_items + 2) / 3));
    while (sizes.size() < num_hidden) sizes.push_back(std::max<std::size_t>(1, sizes.back() / 3));
    return sizes;
}

MlpNetwork make_generator(std::size_t num_items, std::span<const std::size_t> hidden, std::size_t num_selected,
                          Rng& rng) {
    std::vector<std::size_t> dims{num_items};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(num_selected);
    return MlpNetwork::create(dims, Activation::Sigmoid, Activation::Sigmoid, rng);
}

MlpNetwork make_discriminator(std::size_t num_items, Rng& rng) {
    const std::size_t dims[] = {num_items, 1};
    return MlpNetwork::create(dims, Activation::Sigmoid, Activation::Sigmoid, rng);
}

std::vector<double> AushModel::selected_ratings(std::span<const double> filler_vector) const {
    auto cache = mlp_forward(generator, filler_vector);
    std::vector<double> r(cache.output().begin(), cache.output().end());
    const double span = scale.max_rating - scale.min_rating;
    for (double& x : r) x = scale.min_rating + span * x;
    return r;
}

Checkpoint to_checkpoint(const AushModel& model) {
    Checkpoint ck;
    ck.kind = "aush";
    std::ostringstream sel;
    for (std::size_t i = 0; i < model.selected.size(); ++i) sel << (i ? "," : "") << model.selected[i];
    ck.meta["selected"] = sel.str();
    ck.meta["scale.min"] = std::to_string(model.scale.min_rating);
    ck.meta["scale.max"] = std::to_string(model.scale.max_rating);
    ck.meta["scale.step"] = std::to_string(model.scale.step);
    append_network(ck, model.generator, "G.");
    append_network(ck, model.discriminator, "D.");
    return ck;
}

AushModel aush_model_from_checkpoint(const Checkpoint& ck) {
    if (ck.kind != "aush") throw std::runtime_error("checkpoint kind '" + ck.kind + "' is not aush");
    AushModel m;
    m.generator = network_from_checkpoint(ck, "G.");
    m.discriminator = network_from_checkpoint(ck, "D.");
    std::istringstream sel(ck.meta_value("selected"));
    std::string tok;
    while (std::getline(sel, tok, ','))
        if (!tok.empty()) m.selected.push_back(static_cast<ItemId>(std::stoul(tok)));
    m.scale = RatingScale(std::stod(ck.meta_value("scale.min")), std::stod(ck.meta_value("scale.max")),
                          std::stod(ck.meta_value("scale.step")));
    return m;
}

// ---- training ------------------------------------------------------------------

LossWeights loss_weights_for(const std::string& variant) {
    if (variant == "full") return {1.0, 1.0, 1.0};
    if (variant == "adv") return {1.0, 0.0, 0.0};
    if (variant == "rec") return {0.0, 0.0, 1.0};
    if (variant == "rec+shill") return {0.0, 1.0, 1.0};
    throw std::invalid_argument("unknown loss variant '" + variant + "' (expected full, adv, rec, rec+shill)");
}

void TrainingSchedule::validate() const {
    if (epochs < 1 || d_steps < 1 || g_steps < 1 || batch_size < 1)
        throw ValidationError("training schedule: epochs, k1, k2 and batch size must be positive");
    if (!(unobserved_fraction > 0.0 && unobserved_fraction <= 1.0))
        throw ValidationError("training schedule: m must be in (0, 1]");
    if (!(learning_rate > 0.0)) throw ValidationError("training schedule: learning rate must be positive");
    if (!(clamp_eps > 0.0 && clamp_eps < 0.5)) throw ValidationError("training schedule: clamp eps must be in (0, 0.5)");
}

namespace {

struct GeneratedBatch {
    TemplateBatch templates;
    std::vector<std::vector<double>> inputs;
    std::vector<ForwardCache> caches;
    BatchOutputs ratings;
    std::vector<std::vector<double>> fake_profiles;
};

GeneratedBatch generate_batch(const AushModel& model, const RatingMatrix& m, const AttackConfig& cfg,
                              const TrainingSchedule& sched, FillerStrategy strategy, const ItemStats& stats,
                              std::span<const ItemId> excluded, Rng& rng) {
    GeneratedBatch b;
    const auto users = sample_templates(m, sched.batch_size, cfg.profile_size, rng);
    b.templates = make_template_batch(m, users, strategy, cfg.filler_size, stats, excluded, rng);
    const double span = cfg.scale.max_rating - cfg.scale.min_rating;
    for (const auto& fillers : b.templates.fillers) {
        auto x = dense_filler_vector(fillers, m.num_items());
        auto cache = mlp_forward(model.generator, x);
        std::vector<double> r(cache.output().begin(), cache.output().end());
        for (double& v : r) v = cfg.scale.min_rating + span * v;
        auto fake = x;
        for (std::size_t j = 0; j < cfg.selected.size(); ++j) fake[cfg.selected[j]] = r[j];
        b.inputs.push_back(std::move(x));
        b.caches.push_back(std::move(cache));
        b.ratings.push_back(std::move(r));
        b.fake_profiles.push_back(std::move(fake));
    }
    return b;
}

std::vector<std::vector<double>> real_batch(const RatingMatrix& m, std::size_t count, Rng& rng) {
    std::vector<UserId> everyone(m.num_users());
    for (UserId u = 0; u < m.num_users(); ++u) everyone[u] = u;
    std::vector<std::vector<double>> out;
    for (UserId u : draw_users(everyone, count, rng)) out.push_back(m.dense_user_row(u));
    return out;
}

bool inside_clamp(double raw, double eps) { return raw > eps && raw < 1.0 - eps; }

}  // namespace

AushTrainingResult train_aush(const RatingMatrix& m, const AttackConfig& cfg, const TrainingSchedule& sched,
                              FillerStrategy strategy, std::uint64_t seed) {
    cfg.validate(m.num_items());
    sched.validate();
    if (eligible_template_users(m, cfg.profile_size).empty())
        throw NoEligibleTemplatesError("train_aush: no user has at least P=" + std::to_string(cfg.profile_size) +
                                       " ratings");
    const ItemStats stats = compute_item_stats(m, cfg.selected);
    std::vector<ItemId> excluded = cfg.selected;
    excluded.push_back(cfg.target);

    Rng rng(seed);
    AushTrainingResult res;
    res.model.selected = cfg.selected;
    res.model.scale = cfg.scale;
    const auto hidden = generator_hidden_sizes(m.num_items());
    res.model.generator = make_generator(m.num_items(), hidden, cfg.selected.size(), rng);
    res.model.discriminator = make_discriminator(m.num_items(), rng);
    AdamState adam_g(res.model.generator, sched.learning_rate);
    AdamState adam_d(res.model.discriminator, sched.learning_rate);
    auto& G = res.model.generator;
    auto& D = res.model.discriminator;
    const double span = cfg.scale.max_rating - cfg.scale.min_rating;
    const double eps = sched.clamp_eps;
    std::size_t step = 0;

    auto log_step = [&](std::size_t epoch, char phase, const GeneratedBatch& gb, const ReconTargets& rt,
                        double h) {
        TrainingLogEntry e;
        e.epoch = epoch;
        e.step = step;
        e.phase = phase;
        e.recon = reconstruction_loss(gb.ratings, rt).value;
        e.shill = shilling_loss(gb.ratings, cfg.scale.max_rating).value;
        e.adversarial = h;
        if (!std::isfinite(e.recon) || !std::isfinite(e.shill) || !std::isfinite(e.adversarial))
            throw NonFiniteError("train_aush: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                 std::to_string(step));
        res.log.push_back(e);
    };

    for (std::size_t epoch = 0; epoch < sched.epochs; ++epoch) {
        for (std::size_t k = 0; k < sched.d_steps; ++k) {
            auto gb = generate_batch(res.model, m, cfg, sched, strategy, stats, excluded, rng);
            res.uniform_fallbacks += gb.templates.uniform_fallbacks;
            auto rt = build_recon_targets(m, gb.templates.users, cfg.selected, sched.unobserved_fraction, rng);
            auto real = real_batch(m, sched.batch_size, rng);

            // ascend H: minimize -H
            MlpGradients grads = D.zero_gradients();
            double h_real = 0.0, h_fake = 0.0;
            const double inv_r = 1.0 / static_cast<double>(real.size());
            const double inv_f = 1.0 / static_cast<double>(gb.fake_profiles.size());
            for (const auto& x : real) {
                auto c = mlp_forward(D, x);
                const double raw = c.output()[0];
                const double d = clamp_probability(raw, eps);
                h_real += inv_r * std::log(d);
                const double g[] = {inside_clamp(raw, eps) ? -inv_r / d : 0.0};
                mlp_backward_accumulate(D, c, g, grads, false);
            }
            for (const auto& x : gb.fake_profiles) {
                auto c = mlp_forward(D, x);
                const double raw = c.output()[0];
                const double d = clamp_probability(raw, eps);
                h_fake += inv_f * std::log(1.0 - d);
                const double g[] = {inside_clamp(raw, eps) ? inv_f / (1.0 - d) : 0.0};
                mlp_backward_accumulate(D, c, g, grads, false);
            }
            log_step(epoch, 'D', gb, rt, h_real + h_fake);
            adam_update(D, grads, adam_d);
            ++res.d_updates;
            ++step;
        }

        for (std::size_t k = 0; k < sched.g_steps; ++k) {
            auto gb = generate_batch(res.model, m, cfg, sched, strategy, stats, excluded, rng);
            res.uniform_fallbacks += gb.templates.uniform_fallbacks;
            auto rt = build_recon_targets(m, gb.templates.users, cfg.selected, sched.unobserved_fraction, rng);
            auto real = real_batch(m, sched.batch_size, rng);

            double h_real = 0.0;
            for (const auto& x : real)
                h_real += std::log(clamp_probability(mlp_forward(D, x).output()[0], eps)) /
                          static_cast<double>(real.size());

            const auto recon = reconstruction_loss(gb.ratings, rt);
            const auto shill = shilling_loss(gb.ratings, cfg.scale.max_rating);
            const double inv_f = 1.0 / static_cast<double>(gb.fake_profiles.size());
            double h_fake = 0.0;
            MlpGradients g_grads = G.zero_gradients();
            MlpGradients d_scratch = D.zero_gradients();
            for (std::size_t u = 0; u < gb.fake_profiles.size(); ++u) {
                auto dc = mlp_forward(D, gb.fake_profiles[u]);
                const double raw = dc.output()[0];
                const double d = clamp_probability(raw, eps);
                h_fake += inv_f * std::log(1.0 - d);

                std::vector<double> d_rating(cfg.selected.size(), 0.0);
                if (sched.weights.adversarial != 0.0 && inside_clamp(raw, eps)) {
                    const double dd = sched.non_saturating ? -inv_f / d : -inv_f / (1.0 - d);
                    const double g[] = {sched.weights.adversarial * dd};
                    mlp_backward_accumulate(D, dc, g, d_scratch, true);
                    for (std::size_t j = 0; j < cfg.selected.size(); ++j)
                        d_rating[j] += d_scratch.input[cfg.selected[j]];
                }
                std::vector<double> d_out(cfg.selected.size());
                for (std::size_t j = 0; j < cfg.selected.size(); ++j) {
                    d_rating[j] += sched.weights.reconstruction * recon.grad[u][j] +
                                   sched.weights.shilling * shill.grad[u][j];
                    d_out[j] = d_rating[j] * span;
                }
                mlp_backward_accumulate(G, gb.caches[u], d_out, g_grads, false);
            }
            log_step(epoch, 'G', gb, rt, h_real + h_fake);
            adam_update(G, g_grads, adam_g);
            ++res.g_updates;
            ++step;
        }
    }
    return res;
}

std::string format_training_log(const std::vector<TrainingLogEntry>& log) {
    std::ostringstream os;
    os.precision(17);
    for (const auto& e : log)
        os << "{\"epoch\":" << e.epoch << ",\"step\":" << e.step << ",\"phase\":\"" << e.phase
           << "\",\"recon\":" << e.recon << ",\"shill\":" << e.shill << ",\"H\":" << e.adversarial << "}\n";
    return os.str();
}

// ---- generation ----------------------------------------------------------------

std::vector<ProfileRow> patch_templates(const AushModel& model, const TemplateBatch& batch, const AttackConfig& cfg,
                                        std::size_t num_items, const PatchOptions& options) {
    if (model.selected != cfg.selected)
        throw ValidationError("patch_templates: model was trained for a different selected set");
    std::vector<ProfileRow> rows;
    rows.reserve(batch.fillers.size());
    for (const auto& original : batch.fillers) {
        std::vector<ItemRating> fillers = original;
        if (options.filler_rating)
            for (auto& e : fillers) e.rating = *options.filler_rating;
        auto r = model.selected_ratings(dense_filler_vector(fillers, num_items));
        for (double& v : r) v = cfg.scale.snap(v);
        rows.push_back(assemble_profile(fillers, cfg.selected, r, cfg.target, cfg.target_rating(), cfg.scale));
    }
    return rows;
}

ProfileSet generate_profiles(const AushModel& model, const RatingMatrix& m, const AttackConfig& cfg,
                             FillerStrategy strategy, std::uint64_t seed, const PatchOptions& options) {
    cfg.validate(m.num_items());
    const ItemStats stats = compute_item_stats(m, cfg.selected);
    std::vector<ItemId> excluded = cfg.selected;
    excluded.push_back(cfg.target);
    Rng rng(seed);
    const auto users = sample_templates(m, cfg.attack_size, cfg.profile_size, rng);
    const auto batch = make_template_batch(m, users, strategy, cfg.filler_size, stats, excluded, rng);

    ProfileSet ps;
    ps.attack = "aush";
    ps.config_hash = cfg.hash();
    ps.seed = seed;
    ps.target = cfg.target;
    ps.rows = patch_templates(model, batch, cfg, m.num_items(), options);
    if (batch.uniform_fallbacks > 0)
        ps.flags.push_back("aush: " + std::to_string(batch.uniform_fallbacks) +
                           " templates fell back to uniform filler sampling");
    return ps;
}

}  // namespace aush
