#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "geoeval/corpus.hpp"
#include "geoeval/detail/numbers.hpp"
#include "geoeval/error.hpp"
#include "geoeval/utf8.hpp"

namespace geoeval {

enum class LineFormat { tsv_multi_line, csv_one_per_line };

inline std::optional<LineFormat> parse_line_format(std::string_view s) {
    if (s == "tsv_multi_line") return LineFormat::tsv_multi_line;
    if (s == "csv_one_per_line") return LineFormat::csv_one_per_line;
    return std::nullopt;
}

/// A column named by header text or by zero-based position.
struct ColumnRef {
    std::optional<std::string> header;
    std::optional<std::size_t> index;

    static ColumnRef named(std::string h) { return ColumnRef{std::move(h), std::nullopt}; }
    static ColumnRef at(std::size_t i) { return ColumnRef{std::nullopt, i}; }
};

/// Maps corpus fields to input columns. Required: text, phrase, lon, lat.
/// Optional: record_key, entry_id, start, end, place_name, place_type.
using ColumnMap = std::map<std::string, ColumnRef, std::less<>>;

struct SkippedRecord {
    std::size_t line = 0;
    std::string reason;
};

struct ConversionReport {
    std::size_t rows_read = 0;
    std::vector<std::string> warnings;
    std::vector<SkippedRecord> skipped;
};

struct ConversionResult {
    Corpus corpus;
    ConversionReport report;
};

namespace detail {

struct DelimitedRow {
    std::size_t line = 0;
    std::vector<std::string> cells;
};

/// RFC 4180 reader: quoted cells may contain delimiters, doubled quotes and newlines.
inline std::vector<DelimitedRow> read_delimited(std::string_view in, char delim) {
    if (in.substr(0, 3) == "\xEF\xBB\xBF") in.remove_prefix(3);
    std::vector<DelimitedRow> rows;
    DelimitedRow row;
    std::string cell;
    bool quoted = false;
    bool row_has_content = false;
    std::size_t line = 1;
    row.line = 1;
    auto end_cell = [&] {
        row.cells.push_back(std::move(cell));
        cell.clear();
    };
    auto end_row = [&] {
        end_cell();
        if (row_has_content || row.cells.size() > 1 || !row.cells.front().empty()) rows.push_back(std::move(row));
        row = DelimitedRow{};
        row.line = line;
        row_has_content = false;
    };
    for (std::size_t i = 0; i < in.size(); ++i) {
        char c = in[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < in.size() && in[i + 1] == '"') {
                    cell += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                cell += c;
            }
            continue;
        }
        if (c == '"' && cell.empty()) {
            quoted = true;
            row_has_content = true;
        } else if (c == delim) {
            end_cell();
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < in.size() && in[i + 1] == '\n') ++i;
            ++line;
            end_row();
        } else {
            cell += c;
        }
    }
    if (!cell.empty() || !row.cells.empty() || row_has_content) end_row();
    return rows;
}

struct ResolvedColumns {
    std::map<std::string, std::size_t, std::less<>> index;

    std::optional<std::size_t> get(std::string_view field) const {
        auto it = index.find(field);
        if (it == index.end()) return std::nullopt;
        return it->second;
    }
};

inline ResolvedColumns resolve_columns(const ColumnMap& map, const std::vector<std::string>& header) {
    for (std::string_view required : {"text", "phrase", "lon", "lat"})
        if (!map.contains(required)) throw ConversionError("column map does not cover required field '" + std::string(required) + "'");
    ResolvedColumns out;
    for (const auto& [field, ref] : map) {
        if (ref.index) {
            if (*ref.index >= header.size())
                throw ConversionError("mapped column " + std::to_string(*ref.index) + " for '" + field + "' does not exist");
            out.index[field] = *ref.index;
            continue;
        }
        if (!ref.header) throw ConversionError("column reference for '" + field + "' is empty");
        std::optional<std::size_t> found;
        for (std::size_t i = 0; i < header.size(); ++i)
            if (trim(header[i]) == *ref.header) found = i;
        if (!found) throw ConversionError("mapped column \"" + *ref.header + "\" for '" + field + "' is missing from the header");
        out.index[field] = *found;
    }
    return out;
}

}  // namespace detail

/// Converts line-based annotations into a Corpus. Start/end come from mapped columns when
/// present, otherwise from the first unused occurrence of the phrase in the text.
inline ConversionResult convert_line_corpus(std::string_view rows, LineFormat format, const ColumnMap& map) {
    auto table = detail::read_delimited(rows, format == LineFormat::tsv_multi_line ? '\t' : ',');
    if (table.empty()) throw ConversionError("input has no header row");
    auto cols = detail::resolve_columns(map, table.front().cells);

    ConversionResult result;
    auto& corpus = result.corpus;
    auto& report = result.report;
    std::unordered_map<std::string, std::size_t> entry_by_key;
    std::unordered_map<std::string, std::size_t> entry_by_id;
    std::optional<std::string> previous_key;

    for (std::size_t r = 1; r < table.size(); ++r) {
        const auto& row = table[r];
        ++report.rows_read;
        auto skip = [&](std::string reason) { report.skipped.push_back({row.line, std::move(reason)}); };
        auto cell = [&](std::string_view field) -> std::optional<std::string> {
            auto i = cols.get(field);
            if (!i || *i >= row.cells.size()) return std::nullopt;
            return row.cells[*i];
        };

        auto text = cell("text");
        if (!text) {
            skip("row has too few columns");
            continue;
        }
        std::u32string scalars;
        try {
            scalars = utf8::decode(*text);
        } catch (const ValidationError& e) {
            skip(e.what());
            continue;
        }
        bool xml_safe = true;
        for (char32_t c : scalars) xml_safe = xml_safe && detail::is_xml_char(c);
        if (!xml_safe) {
            skip("text contains a character XML cannot carry");
            continue;
        }

        std::string key;
        if (auto k = cell("record_key"))
            key = *k;
        else if (format == LineFormat::tsv_multi_line)
            key = *text;
        else
            key = std::to_string(r);

        // Locate or create the entry this row belongs to.
        std::size_t entry_index = 0;
        bool merge = format == LineFormat::tsv_multi_line && entry_by_key.contains(key);
        if (merge) {
            entry_index = entry_by_key.at(key);
            if (previous_key != key)
                report.warnings.push_back("line " + std::to_string(row.line) + ": record key \"" + key +
                                          "\" reappears after other records; merged into its first entry");
            if (corpus.entries[entry_index].text != *text) {
                skip("text differs from earlier rows of record \"" + key + "\"");
                continue;
            }
        }

        ToponymSpan span;
        auto phrase = cell("phrase").value_or("");
        bool has_span = !phrase.empty();
        if (has_span) {
            auto lon_s = cell("lon").value_or("");
            auto lat_s = cell("lat").value_or("");
            if (!detail::trim(lon_s).empty() || !detail::trim(lat_s).empty()) {
                auto lon = detail::parse_double(lon_s);
                auto lat = detail::parse_double(lat_s);
                if (!lon || !lat || !GeoPoint{*lon, *lat}.valid()) {
                    skip("invalid coordinates \"" + lon_s + "\", \"" + lat_s + "\"");
                    continue;
                }
                span.footprint = GeoPoint{*lon, *lat};
            }
            if (auto v = cell("place_name"); v && !v->empty()) span.place_name = *v;
            if (auto v = cell("place_type"); v && !v->empty()) span.place_type = *v;
            span.phrase = phrase;

            auto start_s = cell("start");
            auto end_s = cell("end");
            if (start_s && end_s && !detail::trim(*start_s).empty()) {
                auto s = detail::parse_int<std::size_t>(*start_s);
                auto e = detail::parse_int<std::size_t>(*end_s);
                if (!s || !e) {
                    skip("invalid start/end \"" + *start_s + "\", \"" + *end_s + "\"");
                    continue;
                }
                span.start = *s;
                span.end = *e;
            } else {
                const auto& existing = merge ? corpus.entries[entry_index].annotations : std::vector<ToponymSpan>{};
                auto phrase_len = utf8::length(phrase);
                std::size_t occurrences = 0;
                std::optional<std::size_t> chosen;
                for (auto pos = text->find(phrase); pos != std::string::npos; pos = text->find(phrase, pos + 1)) {
                    ++occurrences;
                    auto s = utf8::scalar_index(*text, pos);
                    bool used = false;
                    for (const auto& a : existing) used = used || (a.start <= s + phrase_len - 1 && s <= a.end);
                    if (!used && !chosen) chosen = s;
                }
                if (occurrences == 0) {
                    skip("phrase \"" + phrase + "\" not found in text");
                    continue;
                }
                if (!chosen) {
                    skip("every occurrence of phrase \"" + phrase + "\" is already annotated");
                    continue;
                }
                if (occurrences > 1)
                    report.warnings.push_back("line " + std::to_string(row.line) + ": phrase \"" + phrase + "\" occurs " +
                                              std::to_string(occurrences) + " times; using offset " +
                                              std::to_string(*chosen));
                span.start = *chosen;
                span.end = *chosen + phrase_len - 1;
            }
            std::string entry_label = merge ? corpus.entries[entry_index].entry_id : key;
            try {
                validate_span(scalars, span, entry_label);
            } catch (const ValidationError& e) {
                skip(e.what());
                continue;
            }
        }

        if (!merge) {
            CorpusEntry entry;
            if (auto id = cell("entry_id"); id && !id->empty())
                entry.entry_id = *id;
            else if (cols.get("record_key") || format == LineFormat::csv_one_per_line)
                entry.entry_id = key;
            else
                entry.entry_id = std::to_string(corpus.entries.size() + 1);
            if (entry_by_id.contains(entry.entry_id)) {
                skip("duplicate entry id \"" + entry.entry_id + "\"");
                continue;
            }
            entry.text = *text;
            entry_index = corpus.entries.size();
            entry_by_id.emplace(entry.entry_id, entry_index);
            entry_by_key.emplace(key, entry_index);
            corpus.entries.push_back(std::move(entry));
        }
        if (has_span) corpus.entries[entry_index].annotations.push_back(std::move(span));
        previous_key = key;
    }
    return result;
}

}  // namespace geoeval
