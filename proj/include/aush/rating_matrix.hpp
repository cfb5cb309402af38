#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace aush {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& path, std::size_t line, const std::string& what);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EmptyDatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RatingScale {
    double min_rating = 1.0;
    double max_rating = 5.0;  // Q
    double step = 1.0;

    RatingScale() = default;
    RatingScale(double lo, double hi, double step);

    void validate() const;
    bool on_grid(double r) const;
    // Rounds to the nearest legal level, then clips into [min, max].
    double snap(double r) const;
    double clip(double r) const;
    std::size_t num_levels() const;
    // Index of a legal rating in 0..num_levels()-1.
    std::size_t level_index(double r) const;
    double level_value(std::size_t idx) const;

    bool operator==(const RatingScale&) const = default;

    static RatingScale movielens() { return {1.0, 5.0, 1.0}; }
    static RatingScale filmtrust() { return {0.5, 4.0, 0.5}; }
};

struct ItemRating {
    ItemId item;
    double rating;
    bool operator==(const ItemRating&) const = default;
};

struct UserRating {
    UserId user;
    double rating;
    bool operator==(const UserRating&) const = default;
};

struct RatingTriple {
    UserId user;
    ItemId item;
    double rating;
    bool operator==(const RatingTriple&) const = default;
};

/// Sparse user x item rating store. Absent entries are unrated.
///
/// Both the per-user and per-item indices are kept sorted by id, so row and
/// column scans are deterministic. Instances are immutable once built; use
/// RatingMatrix::Builder to construct one.
class RatingMatrix {
public:
    class Builder;

    RatingMatrix() = default;

    std::size_t num_users() const { return by_user_.size(); }
    std::size_t num_items() const { return by_item_.size(); }
    std::size_t num_ratings() const { return num_ratings_; }
    const RatingScale& scale() const { return scale_; }

    std::span<const ItemRating> user_ratings(UserId u) const { return by_user_.at(u); }
    std::span<const UserRating> item_ratings(ItemId v) const { return by_item_.at(v); }

    // 0.0 when unrated.
    double rating(UserId u, ItemId v) const;
    bool has_rating(UserId u, ItemId v) const;

    // Dense view of a user row, zeros for unrated items.
    std::vector<double> dense_user_row(UserId u) const;
    // Dense view of an item column over all users, zeros for unrated.
    std::vector<double> dense_item_column(ItemId v) const;

    std::vector<RatingTriple> triples() const;

    const std::vector<std::string>& user_labels() const { return user_labels_; }
    const std::vector<std::string>& item_labels() const { return item_labels_; }
    const std::string& user_label(UserId u) const { return user_labels_.at(u); }
    const std::string& item_label(ItemId v) const { return item_labels_.at(v); }
    // Linear scan; returns num_items() when absent.
    ItemId find_item(const std::string& label) const;

    // Appends users at ids num_users()..num_users()+rows.size()-1 while
    // keeping the item universe fixed.
    RatingMatrix with_appended_users(const std::vector<std::vector<ItemRating>>& rows,
                                     const std::vector<std::string>& labels) const;

    // Same users/items/scale, a subset of entries.
    RatingMatrix with_entries(const std::vector<RatingTriple>& entries) const;

    // Compares label-keyed contents, so a reload of an export compares equal.
    bool same_contents(const RatingMatrix& other) const;

private:
    friend class Builder;

    RatingScale scale_;
    std::vector<std::vector<ItemRating>> by_user_;
    std::vector<std::vector<UserRating>> by_item_;
    std::vector<std::string> user_labels_;
    std::vector<std::string> item_labels_;
    std::size_t num_ratings_ = 0;
};

class RatingMatrix::Builder {
public:
    explicit Builder(RatingScale scale);

    // Returns the internal id, assigning the next free one on first sight.
    UserId intern_user(const std::string& label);
    ItemId intern_item(const std::string& label);

    // Throws ValidationError for off-grid or duplicate entries.
    void add(UserId u, ItemId v, double rating);

    RatingMatrix build() &&;

private:
    RatingScale scale_;
    std::vector<std::string> user_labels_;
    std::vector<std::string> item_labels_;
    std::vector<RatingTriple> entries_;
    std::unordered_map<std::string, UserId> user_index_;
    std::unordered_map<std::string, ItemId> item_index_;
};

enum class DatasetFormat { TsvUirt, CsvUir };

DatasetFormat parse_dataset_format(const std::string& id);
std::string to_string(DatasetFormat f);

// Fixed user/item id order. Labels are interned up front, so ids match the
// matrix the universe was taken from even for users or items without ratings;
// labels outside the universe are rejected.
struct LabelUniverse {
    std::vector<std::string> users;
    std::vector<std::string> items;
};

RatingMatrix load_ratings(const std::string& path, DatasetFormat format, const RatingScale& scale,
                          const LabelUniverse* universe = nullptr);
RatingMatrix parse_ratings(std::string_view text, DatasetFormat format, const RatingScale& scale,
                           const std::string& source_name = "<memory>", const LabelUniverse* universe = nullptr);

// One label per line.
void write_labels(const std::vector<std::string>& labels, const std::string& path);
std::vector<std::string> read_labels(const std::string& path);

// Canonical export: user\titem\trating sorted by user id then item id, using labels.
void export_ratings(const RatingMatrix& m, const std::string& path);
std::string format_ratings(const RatingMatrix& m);

// Iteratively drops users with fewer than min_user_ratings ratings and items
// left without ratings until nothing changes. Ids are re-compacted.
RatingMatrix filter_dataset(const RatingMatrix& m, std::size_t min_user_ratings);

struct TrainTestSplit {
    RatingMatrix train;
    RatingMatrix test;
};

// Rating-level random split. Both halves keep the full user/item universe of m.
TrainTestSplit split_ratings(const RatingMatrix& m, double test_fraction, std::uint64_t seed);

// Splits m according to a held-out file (e.g. a published test split): every
// rating of m that appears in the test file goes to test.
TrainTestSplit split_by_file(const RatingMatrix& m, const std::string& test_path, DatasetFormat format);

}  // namespace aush
