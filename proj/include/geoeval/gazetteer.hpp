#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "geoeval/corpus.hpp"
#include "geoeval/detail/numbers.hpp"
#include "geoeval/error.hpp"
#include "geoeval/utf8.hpp"

namespace geoeval {

struct GazetteerEntry {
    std::string canonical_name;
    std::vector<std::string> alternate_names;
    GeoPoint location;
    std::uint64_t population = 0;
    std::string feature_class;

    friend bool operator==(const GazetteerEntry&, const GazetteerEntry&) = default;
};

struct GazetteerLoadReport {
    std::size_t rows_read = 0;
    std::size_t bad_rows = 0;
    std::vector<std::size_t> bad_lines;
};

/// Place-name dictionary with a case-insensitive index over canonical and alternate names.
/// Immutable once built.
class Gazetteer {
public:
    Gazetteer() = default;

    explicit Gazetteer(std::vector<GazetteerEntry> entries) : entries_(std::move(entries)) {
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            index_name(entries_[i].canonical_name, i);
            for (const auto& alt : entries_[i].alternate_names) index_name(alt, i);
        }
    }

    /// Case-insensitive exact match over canonical and alternate names, in load order.
    std::vector<GazetteerEntry> lookup(std::string_view name) const {
        std::vector<GazetteerEntry> out;
        auto it = index_.find(utf8::fold_case(name));
        if (it == index_.end()) return out;
        out.reserve(it->second.size());
        for (auto i : it->second) out.push_back(entries_[i]);
        return out;
    }

    bool contains(std::string_view name) const { return index_.contains(utf8::fold_case(name)); }

    const std::vector<GazetteerEntry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t indexed_names() const noexcept { return index_.size(); }

private:
    void index_name(std::string_view name, std::size_t entry) {
        if (name.empty()) return;
        auto& slots = index_[utf8::fold_case(name)];
        if (std::find(slots.begin(), slots.end(), entry) == slots.end()) slots.push_back(entry);
    }

    std::vector<GazetteerEntry> entries_;
    std::unordered_map<std::string, std::vector<std::size_t>> index_;
};

struct GazetteerLoad {
    Gazetteer gazetteer;
    GazetteerLoadReport report;
};

/// Loads TSV rows of name, alternate_names (comma-joined), lat, lon, population, feature_class.
/// A header row starting with "name" is skipped. Malformed rows are skipped and counted.
inline GazetteerLoad load_gazetteer(std::string_view tsv) {
    std::vector<GazetteerEntry> entries;
    GazetteerLoadReport report;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= tsv.size()) {
        auto nl = tsv.find('\n', pos);
        auto line = tsv.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? tsv.size() + 1 : nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line_no == 1 && line.substr(0, 3) == "\xEF\xBB\xBF") line.remove_prefix(3);
        if (detail::trim(line).empty()) continue;

        std::vector<std::string_view> cols;
        for (std::size_t b = 0;;) {
            auto t = line.find('\t', b);
            cols.push_back(line.substr(b, t == std::string_view::npos ? std::string_view::npos : t - b));
            if (t == std::string_view::npos) break;
            b = t + 1;
        }
        if (line_no == 1 && !cols.empty() && detail::trim(cols[0]) == "name") continue;

        ++report.rows_read;
        auto bad = [&] {
            ++report.bad_rows;
            report.bad_lines.push_back(line_no);
        };
        if (cols.size() != 6) {
            bad();
            continue;
        }
        GazetteerEntry e;
        e.canonical_name = std::string(detail::trim(cols[0]));
        auto lat = detail::parse_double(cols[2]);
        auto lon = detail::parse_double(cols[3]);
        auto pop = detail::parse_int<std::uint64_t>(cols[4]);
        if (e.canonical_name.empty() || !lat || !lon || !pop || !GeoPoint{*lon, *lat}.valid()) {
            bad();
            continue;
        }
        e.location = GeoPoint{*lon, *lat};
        e.population = *pop;
        e.feature_class = std::string(detail::trim(cols[5]));
        for (std::size_t b = 0; b <= cols[1].size();) {
            auto c = cols[1].find(',', b);
            auto alt = detail::trim(cols[1].substr(b, c == std::string_view::npos ? std::string_view::npos : c - b));
            if (!alt.empty()) e.alternate_names.emplace_back(alt);
            if (c == std::string_view::npos) break;
            b = c + 1;
        }
        entries.push_back(std::move(e));
    }
    if (entries.empty()) throw ValidationError("gazetteer has no valid rows");
    return GazetteerLoad{Gazetteer(std::move(entries)), std::move(report)};
}

inline std::vector<GazetteerEntry> lookup_name(const Gazetteer& g, std::string_view name) { return g.lookup(name); }

/// Highest population wins; ties go to the smallest canonical name, then the smallest (lat, lon).
inline const GazetteerEntry& resolve_highest_population(std::span<const GazetteerEntry> candidates) {
    if (candidates.empty()) throw ValidationError("cannot resolve a toponym without candidates");
    auto rank = [](const GazetteerEntry& e) {
        return std::make_tuple(e.population, std::string_view(e.canonical_name), e.location.lat, e.location.lon);
    };
    const GazetteerEntry* best = &candidates.front();
    for (const auto& c : candidates.subspan(1)) {
        auto [bp, bn, blat, blon] = rank(*best);
        auto [cp, cn, clat, clon] = rank(c);
        if (cp != bp ? cp > bp : std::tie(cn, clat, clon) < std::tie(bn, blat, blon)) best = &c;
    }
    return *best;
}

}  // namespace geoeval
