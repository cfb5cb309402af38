#include "aush/detection.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace aush {

namespace {

void check_shapes(const RatingDistribution& a, const RatingDistribution& b) {
    if (a.levels != b.levels || a.values.size() != b.values.size())
        throw std::invalid_argument("rating distributions have different shapes");
    if (a.num_items() == 0) throw std::invalid_argument("rating distributions are empty");
}

// KL(p || m) with 0 log 0 = 0.
double kl(std::span<const double> p, std::span<const double> mix) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) s += p[i] * std::log(p[i] / mix[i]);
    return s;
}

// Builds normalized histograms from per-item level counts; level 0 takes
// whatever part of the population did not rate the item.
RatingDistribution normalize_counts(std::vector<std::size_t> counts, std::size_t levels, std::size_t population) {
    RatingDistribution d;
    d.levels = levels;
    d.values.resize(counts.size());
    const double n = static_cast<double>(population);
    for (std::size_t base = 0; base < counts.size(); base += levels) {
        std::size_t rated = 0;
        for (std::size_t l = 1; l < levels; ++l) rated += counts[base + l];
        counts[base] = population - rated;
        for (std::size_t l = 0; l < levels; ++l) d.values[base + l] = static_cast<double>(counts[base + l]) / n;
    }
    return d;
}

}  // namespace

RatingDistribution rating_distribution(const RatingMatrix& m, std::span<const UserId> users) {
    if (users.empty()) throw std::invalid_argument("rating_distribution: empty population");
    const std::size_t levels = m.scale().num_levels() + 1;
    std::vector<std::size_t> counts(m.num_items() * levels, 0);
    for (UserId u : users)
        for (const auto& e : m.user_ratings(u)) ++counts[e.item * levels + 1 + m.scale().level_index(e.rating)];
    return normalize_counts(std::move(counts), levels, users.size());
}

RatingDistribution rating_distribution(const ProfileSet& profiles, std::size_t num_items, const RatingScale& scale,
                                       bool include_target) {
    if (profiles.rows.empty()) throw std::invalid_argument("rating_distribution: empty profile set");
    const std::size_t levels = scale.num_levels() + 1;
    std::vector<std::size_t> counts(num_items * levels, 0);
    for (const auto& row : profiles.rows) {
        for (const auto& e : row) {
            if (!include_target && e.item == profiles.target) continue;
            ++counts.at(e.item * levels + 1 + scale.level_index(e.rating));
        }
    }
    return normalize_counts(std::move(counts), levels, profiles.rows.size());
}

double tvd(const RatingDistribution& real, const RatingDistribution& fake, DistanceConvention conv) {
    check_shapes(real, fake);
    double total = 0.0;
    for (std::size_t i = 0; i < real.values.size(); ++i) total += std::abs(real.values[i] - fake.values[i]);
    total /= static_cast<double>(real.num_items());
    return conv == DistanceConvention::Halved ? 0.5 * total : total;
}

double js(const RatingDistribution& real, const RatingDistribution& fake, DistanceConvention conv) {
    check_shapes(real, fake);
    double total = 0.0;
    std::vector<double> mix(real.levels);
    for (ItemId v = 0; v < real.num_items(); ++v) {
        auto p = real.item(v);
        auto q = fake.item(v);
        for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = 0.5 * (p[i] + q[i]);
        total += kl(p, mix) + kl(q, mix);
    }
    total /= static_cast<double>(real.num_items());
    return conv == DistanceConvention::Halved ? 0.5 * total : total;
}

DetectionScores detection_scores(const RatingMatrix& real, const ProfileSet& fake, bool include_target,
                                 DistanceConvention conv) {
    std::vector<UserId> users(real.num_users());
    for (UserId u = 0; u < real.num_users(); ++u) users[u] = u;
    const auto p = rating_distribution(real, users);
    const auto q = rating_distribution(fake, real.num_items(), real.scale(), include_target);
    DetectionScores s;
    s.tvd = tvd(p, q, conv);
    s.js = js(p, q, conv);
    s.real_users = users.size();
    s.fake_profiles = fake.rows.size();
    s.include_target = include_target;
    s.convention = conv;
    return s;
}

std::string detection_csv_header() { return "attack,dataset,tvd,js\n"; }

std::string detection_csv_row(const std::string& attack, const std::string& dataset, const DetectionScores& s) {
    std::ostringstream os;
    os.precision(10);
    os << attack << ',' << dataset << ',' << s.tvd << ',' << s.js << '\n';
    return os.str();
}

}  // namespace aush
