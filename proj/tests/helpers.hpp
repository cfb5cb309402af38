#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "aush/rating_matrix.hpp"

namespace testutil {

// Matrix from (user label, item label, rating) triples, interned in order.
inline aush::RatingMatrix make_matrix(const std::vector<std::tuple<std::string, std::string, double>>& rows,
                                      aush::RatingScale scale = aush::RatingScale::movielens()) {
    aush::RatingMatrix::Builder b(scale);
    for (const auto& [u, v, r] : rows) b.add(b.intern_user(u), b.intern_item(v), r);
    return std::move(b).build();
}

// Matrix with numeric ids 0..users-1 / 0..items-1 all interned up front.
inline aush::RatingMatrix make_dense_ids(std::size_t users, std::size_t items,
                                         const std::vector<aush::RatingTriple>& entries,
                                         aush::RatingScale scale = aush::RatingScale::movielens()) {
    aush::RatingMatrix::Builder b(scale);
    for (std::size_t u = 0; u < users; ++u) b.intern_user("u" + std::to_string(u));
    for (std::size_t v = 0; v < items; ++v) b.intern_item("i" + std::to_string(v));
    for (const auto& t : entries) b.add(t.user, t.item, t.rating);
    return std::move(b).build();
}

inline std::string data_dir() { return AUSH_DATA_DIR; }
inline std::string source_dir() { return AUSH_SOURCE_DIR; }

}  // namespace testutil
