#include "aush/rating_matrix.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "aush/random.hpp"

namespace aush {

namespace {

constexpr double kGridTol = 1e-9;

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\r' || s[b] == '\t')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\r' || s[e - 1] == '\t')) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_fields(std::string_view line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* b = s.data();
    const char* e = b + s.size();
    auto [p, ec] = std::from_chars(b, e, out);
    return ec == std::errc{} && p == e && std::isfinite(out);
}

std::string format_rating(double r) {
    std::ostringstream os;
    os.precision(10);
    os << r;
    return os.str();
}

}  // namespace

ParseError::ParseError(const std::string& path, std::size_t line, const std::string& what)
    : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

// ---- RatingScale ---------------------------------------------------------

RatingScale::RatingScale(double lo, double hi, double st) : min_rating(lo), max_rating(hi), step(st) {
    validate();
}

void RatingScale::validate() const {
    if (!(min_rating < max_rating)) throw ValidationError("rating scale: min_rating must be < max_rating");
    if (!(step > 0.0)) throw ValidationError("rating scale: step must be > 0");
    double n = (max_rating - min_rating) / step;
    if (std::abs(n - std::round(n)) > kGridTol)
        throw ValidationError("rating scale: (max - min) must be a multiple of step");
}

bool RatingScale::on_grid(double r) const {
    if (r < min_rating - kGridTol || r > max_rating + kGridTol) return false;
    double n = (r - min_rating) / step;
    return std::abs(n - std::round(n)) <= kGridTol;
}

double RatingScale::snap(double r) const {
    double n = std::round((r - min_rating) / step);
    return clip(min_rating + n * step);
}

double RatingScale::clip(double r) const { return std::clamp(r, min_rating, max_rating); }

std::size_t RatingScale::num_levels() const {
    return static_cast<std::size_t>(std::llround((max_rating - min_rating) / step)) + 1;
}

std::size_t RatingScale::level_index(double r) const {
    return static_cast<std::size_t>(std::llround((r - min_rating) / step));
}

double RatingScale::level_value(std::size_t idx) const {
    return min_rating + static_cast<double>(idx) * step;
}

// ---- RatingMatrix --------------------------------------------------------

double RatingMatrix::rating(UserId u, ItemId v) const {
    const auto& row = by_user_.at(u);
    auto it = std::lower_bound(row.begin(), row.end(), v,
                               [](const ItemRating& e, ItemId id) { return e.item < id; });
    return (it != row.end() && it->item == v) ? it->rating : 0.0;
}

bool RatingMatrix::has_rating(UserId u, ItemId v) const {
    const auto& row = by_user_.at(u);
    auto it = std::lower_bound(row.begin(), row.end(), v,
                               [](const ItemRating& e, ItemId id) { return e.item < id; });
    return it != row.end() && it->item == v;
}

std::vector<double> RatingMatrix::dense_user_row(UserId u) const {
    std::vector<double> row(num_items(), 0.0);
    for (const auto& e : by_user_.at(u)) row[e.item] = e.rating;
    return row;
}

std::vector<double> RatingMatrix::dense_item_column(ItemId v) const {
    std::vector<double> col(num_users(), 0.0);
    for (const auto& e : by_item_.at(v)) col[e.user] = e.rating;
    return col;
}

std::vector<RatingTriple> RatingMatrix::triples() const {
    std::vector<RatingTriple> out;
    out.reserve(num_ratings_);
    for (UserId u = 0; u < by_user_.size(); ++u)
        for (const auto& e : by_user_[u]) out.push_back({u, e.item, e.rating});
    return out;
}

ItemId RatingMatrix::find_item(const std::string& label) const {
    auto it = std::find(item_labels_.begin(), item_labels_.end(), label);
    return static_cast<ItemId>(it - item_labels_.begin());
}

RatingMatrix RatingMatrix::with_appended_users(const std::vector<std::vector<ItemRating>>& rows,
                                               const std::vector<std::string>& labels) const {
    if (rows.size() != labels.size())
        throw std::invalid_argument("with_appended_users: rows/labels size mismatch");
    RatingMatrix out = *this;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto u = static_cast<UserId>(out.by_user_.size());
        std::vector<ItemRating> row = rows[i];
        std::sort(row.begin(), row.end(), [](const auto& a, const auto& b) { return a.item < b.item; });
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (row[j].item >= num_items())
                throw ValidationError("appended user rates unknown item " + std::to_string(row[j].item));
            if (j > 0 && row[j].item == row[j - 1].item)
                throw ValidationError("appended user has duplicate item " + std::to_string(row[j].item));
            if (!scale_.on_grid(row[j].rating))
                throw ValidationError("appended rating off the scale grid: " + format_rating(row[j].rating));
            // users are appended in increasing id order, so per-item lists stay sorted
            out.by_item_[row[j].item].push_back({u, row[j].rating});
        }
        out.num_ratings_ += row.size();
        out.by_user_.push_back(std::move(row));
        out.user_labels_.push_back(labels[i]);
    }
    return out;
}

RatingMatrix RatingMatrix::with_entries(const std::vector<RatingTriple>& entries) const {
    Builder b(scale_);
    for (const auto& l : user_labels_) b.intern_user(l);
    for (const auto& l : item_labels_) b.intern_item(l);
    for (const auto& t : entries) b.add(t.user, t.item, t.rating);
    return std::move(b).build();
}

bool RatingMatrix::same_contents(const RatingMatrix& other) const {
    if (num_users() != other.num_users() || num_items() != other.num_items() ||
        num_ratings() != other.num_ratings() || !(scale_ == other.scale_))
        return false;
    auto keyed = [](const RatingMatrix& m) {
        std::map<std::pair<std::string, std::string>, double> out;
        for (const auto& t : m.triples()) out[{m.user_label(t.user), m.item_label(t.item)}] = t.rating;
        return out;
    };
    return keyed(*this) == keyed(other);
}

// ---- Builder -------------------------------------------------------------

RatingMatrix::Builder::Builder(RatingScale scale) : scale_(scale) { scale_.validate(); }

UserId RatingMatrix::Builder::intern_user(const std::string& label) {
    auto [it, inserted] = user_index_.try_emplace(label, static_cast<UserId>(user_labels_.size()));
    if (inserted) user_labels_.push_back(label);
    return it->second;
}

ItemId RatingMatrix::Builder::intern_item(const std::string& label) {
    auto [it, inserted] = item_index_.try_emplace(label, static_cast<ItemId>(item_labels_.size()));
    if (inserted) item_labels_.push_back(label);
    return it->second;
}

void RatingMatrix::Builder::add(UserId u, ItemId v, double rating) {
    if (u >= user_labels_.size() || v >= item_labels_.size())
        throw ValidationError("rating references an id that was never interned");
    if (!scale_.on_grid(rating))
        throw ValidationError("rating " + format_rating(rating) + " is off the scale grid");
    entries_.push_back({u, v, rating});
}

RatingMatrix RatingMatrix::Builder::build() && {
    RatingMatrix m;
    m.scale_ = scale_;
    m.by_user_.resize(user_labels_.size());
    m.by_item_.resize(item_labels_.size());
    std::sort(entries_.begin(), entries_.end(), [](const RatingTriple& a, const RatingTriple& b) {
        return a.user != b.user ? a.user < b.user : a.item < b.item;
    });
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& t = entries_[i];
        if (i > 0 && entries_[i - 1].user == t.user && entries_[i - 1].item == t.item)
            throw ValidationError("duplicate rating for user '" + user_labels_[t.user] + "', item '" +
                                  item_labels_[t.item] + "'");
        // snap away representation noise so stored values are exact grid points
        double r = scale_.level_value(scale_.level_index(t.rating));
        m.by_user_[t.user].push_back({t.item, r});
        m.by_item_[t.item].push_back({t.user, r});
    }
    m.num_ratings_ = entries_.size();
    m.user_labels_ = std::move(user_labels_);
    m.item_labels_ = std::move(item_labels_);
    return m;
}

// ---- IO ------------------------------------------------------------------

DatasetFormat parse_dataset_format(const std::string& id) {
    if (id == "tsv-uirt") return DatasetFormat::TsvUirt;
    if (id == "csv-uir") return DatasetFormat::CsvUir;
    throw ValidationError("unknown dataset format '" + id + "' (expected tsv-uirt or csv-uir)");
}

std::string to_string(DatasetFormat f) {
    return f == DatasetFormat::TsvUirt ? "tsv-uirt" : "csv-uir";
}

RatingMatrix parse_ratings(std::string_view text, DatasetFormat format, const RatingScale& scale,
                           const std::string& source_name, const LabelUniverse* universe) {
    const char sep = format == DatasetFormat::TsvUirt ? '\t' : ',';
    RatingMatrix::Builder b(scale);
    std::size_t fixed_users = 0, fixed_items = 0;
    if (universe) {
        for (const auto& l : universe->users) b.intern_user(l);
        for (const auto& l : universe->items) b.intern_item(l);
        fixed_users = universe->users.size();
        fixed_items = universe->items.size();
    }
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split_fields(line, sep);
        if (fields.size() < 3 || fields.size() > 4)
            throw ParseError(source_name, line_no, "expected 3 or 4 fields, got " + std::to_string(fields.size()));
        if (fields[0].empty() || fields[1].empty())
            throw ParseError(source_name, line_no, "empty user or item id");
        double r = 0.0;
        if (!parse_double(fields[2], r))
            throw ParseError(source_name, line_no, "rating '" + fields[2] + "' is not a number");
        if (fields.size() == 4) {
            double ts = 0.0;
            if (!parse_double(fields[3], ts))
                throw ParseError(source_name, line_no, "timestamp '" + fields[3] + "' is not a number");
        }
        if (!scale.on_grid(r))
            throw ValidationError(source_name + ":" + std::to_string(line_no) + ": rating " + fields[2] +
                                  " is off the scale grid");
        UserId u = b.intern_user(fields[0]);
        ItemId v = b.intern_item(fields[1]);
        if (universe && (u >= fixed_users || v >= fixed_items))
            throw ParseError(source_name, line_no, "user or item outside the label universe");
        b.add(u, v, r);
    }
    return std::move(b).build();
}

RatingMatrix load_ratings(const std::string& path, DatasetFormat format, const RatingScale& scale,
                          const LabelUniverse* universe) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open ratings file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_ratings(ss.str(), format, scale, path, universe);
}

void write_labels(const std::vector<std::string>& labels, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    for (const auto& l : labels) out << l << '\n';
}

std::vector<std::string> read_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

std::string format_ratings(const RatingMatrix& m) {
    std::string out;
    for (const auto& t : m.triples()) {
        out += m.user_label(t.user);
        out += '\t';
        out += m.item_label(t.item);
        out += '\t';
        out += format_rating(t.rating);
        out += '\n';
    }
    return out;
}

void export_ratings(const RatingMatrix& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write ratings file '" + path + "'");
    out << format_ratings(m);
}

// ---- filtering / splitting -----------------------------------------------

RatingMatrix filter_dataset(const RatingMatrix& m, std::size_t min_user_ratings) {
    std::vector<char> keep_user(m.num_users(), 1);
    std::vector<char> keep_item(m.num_items(), 1);
    bool changed = true;
    while (changed) {
        changed = false;
        std::vector<std::size_t> item_count(m.num_items(), 0);
        for (UserId u = 0; u < m.num_users(); ++u) {
            if (!keep_user[u]) continue;
            std::size_t n = 0;
            for (const auto& e : m.user_ratings(u))
                if (keep_item[e.item]) ++n;
            if (n < min_user_ratings) {
                keep_user[u] = 0;
                changed = true;
            }
        }
        for (UserId u = 0; u < m.num_users(); ++u) {
            if (!keep_user[u]) continue;
            for (const auto& e : m.user_ratings(u))
                if (keep_item[e.item]) ++item_count[e.item];
        }
        for (ItemId v = 0; v < m.num_items(); ++v) {
            if (keep_item[v] && item_count[v] == 0) {
                keep_item[v] = 0;
                changed = true;
            }
        }
    }
    RatingMatrix::Builder b(m.scale());
    std::vector<UserId> new_user(m.num_users());
    std::vector<ItemId> new_item(m.num_items());
    for (UserId u = 0; u < m.num_users(); ++u)
        if (keep_user[u]) new_user[u] = b.intern_user(m.user_label(u));
    for (ItemId v = 0; v < m.num_items(); ++v)
        if (keep_item[v]) new_item[v] = b.intern_item(m.item_label(v));
    std::size_t kept = 0;
    for (UserId u = 0; u < m.num_users(); ++u) {
        if (!keep_user[u]) continue;
        for (const auto& e : m.user_ratings(u)) {
            if (!keep_item[e.item]) continue;
            b.add(new_user[u], new_item[e.item], e.rating);
            ++kept;
        }
    }
    if (kept == 0)
        throw EmptyDatasetError("filter_dataset: no ratings survive min_user_ratings=" +
                                std::to_string(min_user_ratings));
    return std::move(b).build();
}

TrainTestSplit split_ratings(const RatingMatrix& m, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction >= 0.0 && test_fraction < 1.0))
        throw std::invalid_argument("split_ratings: test_fraction must be in [0, 1)");
    auto all = m.triples();
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(all.size())));
    Rng rng(seed);
    auto picked = sample_without_replacement(all.size(), n_test, rng);
    std::vector<char> is_test(all.size(), 0);
    for (auto i : picked) is_test[i] = 1;
    std::vector<RatingTriple> train, test;
    train.reserve(all.size() - n_test);
    test.reserve(n_test);
    for (std::size_t i = 0; i < all.size(); ++i) (is_test[i] ? test : train).push_back(all[i]);
    return {m.with_entries(train), m.with_entries(test)};
}

TrainTestSplit split_by_file(const RatingMatrix& m, const std::string& test_path, DatasetFormat format) {
    auto held = load_ratings(test_path, format, m.scale());
    std::map<std::pair<std::string, std::string>, double> held_keys;
    for (const auto& t : held.triples()) held_keys[{held.user_label(t.user), held.item_label(t.item)}] = t.rating;
    std::vector<RatingTriple> train, test;
    for (const auto& t : m.triples()) {
        bool in_test = held_keys.count({m.user_label(t.user), m.item_label(t.item)}) > 0;
        (in_test ? test : train).push_back(t);
    }
    return {m.with_entries(train), m.with_entries(test)};
}

}  // namespace aush
