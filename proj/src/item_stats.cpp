#include "aush/item_stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace aush {

std::string to_string(CoRaterRule r) { return r == CoRaterRule::RatedAny ? "rated-any" : "rated-all"; }

CoRaterRule parse_co_rater_rule(const std::string& s) {
    if (s == "rated-any") return CoRaterRule::RatedAny;
    if (s == "rated-all") return CoRaterRule::RatedAll;
    throw std::invalid_argument("unknown co-rater rule '" + s + "'");
}

std::vector<UserId> selected_item_raters(const RatingMatrix& m, std::span<const ItemId> selected,
                                         CoRaterRule rule) {
    std::vector<std::size_t> hits(m.num_users(), 0);
    for (ItemId s : selected) {
        if (s >= m.num_items()) throw std::out_of_range("selected item out of range");
        for (const auto& e : m.item_ratings(s)) ++hits[e.user];
    }
    std::vector<UserId> out;
    for (UserId u = 0; u < m.num_users(); ++u) {
        bool in = rule == CoRaterRule::RatedAny ? hits[u] > 0 : (!selected.empty() && hits[u] == selected.size());
        if (in) out.push_back(u);
    }
    return out;
}

ItemStats compute_item_stats(const RatingMatrix& m, std::span<const ItemId> selected, CoRaterRule rule) {
    ItemStats st;
    st.co_rater_rule = rule;
    const std::size_t n = m.num_items();
    st.mean.assign(n, 0.0);
    st.stddev.assign(n, 0.0);
    st.popularity.assign(n, 0);
    st.co_raters.assign(n, 0);
    st.mean_fallback.assign(n, 0);

    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (const auto& t : m.triples()) {
        sum += t.rating;
        sq += t.rating * t.rating;
        ++count;
    }
    if (count > 0) {
        st.global_mean = sum / static_cast<double>(count);
        st.global_stddev = std::sqrt(std::max(0.0, sq / static_cast<double>(count) - st.global_mean * st.global_mean));
    } else {
        st.global_mean = 0.5 * (m.scale().min_rating + m.scale().max_rating);
    }

    std::vector<char> in_us(m.num_users(), 0);
    for (UserId u : selected_item_raters(m, selected, rule)) in_us[u] = 1;

    for (ItemId v = 0; v < n; ++v) {
        auto col = m.item_ratings(v);
        st.popularity[v] = col.size();
        if (col.empty()) {
            st.mean[v] = st.global_mean;
            st.stddev[v] = st.global_stddev;
            st.mean_fallback[v] = 1;
            continue;
        }
        double s = 0.0, s2 = 0.0;
        std::size_t co = 0;
        for (const auto& e : col) {
            s += e.rating;
            s2 += e.rating * e.rating;
            if (in_us[e.user]) ++co;
        }
        const double k = static_cast<double>(col.size());
        st.mean[v] = s / k;
        st.stddev[v] = std::sqrt(std::max(0.0, s2 / k - st.mean[v] * st.mean[v]));
        st.co_raters[v] = co;
    }
    return st;
}

}  // namespace aush
