#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "geoeval/corpus.hpp"
#include "geoeval/error.hpp"
#include "geoeval/geoparse.hpp"
#include "geoeval/matching.hpp"

namespace geoeval {

/// Spherical Earth radius.
inline constexpr double kEarthRadiusKm = 6371.0;
/// Half the Earth's circumference: the largest possible error distance.
inline constexpr double kMaxErrorKm = std::numbers::pi * kEarthRadiusKm;
inline constexpr double kAccuracyThresholdKm = 161.0;

/// Haversine great-circle distance in kilometres.
inline double error_distance_km(GeoPoint a, GeoPoint b) {
    constexpr double rad = std::numbers::pi / 180.0;
    double dlat = (b.lat - a.lat) * rad;
    double dlon = (b.lon - a.lon) * rad;
    double s1 = std::sin(dlat / 2.0);
    double s2 = std::sin(dlon / 2.0);
    double h = s1 * s1 + std::cos(a.lat * rad) * std::cos(b.lat * rad) * s2 * s2;
    double d = 2.0 * kEarthRadiusKm * std::asin(std::sqrt(std::clamp(h, 0.0, 1.0)));
    return std::min(d, kMaxErrorKm);
}

inline std::optional<double> precision(std::size_t tp, std::size_t fp) {
    if (tp + fp == 0) return std::nullopt;
    return static_cast<double>(tp) / static_cast<double>(tp + fp);
}

inline std::optional<double> recall(std::size_t tp, std::size_t fn) {
    if (tp + fn == 0) return std::nullopt;
    return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

/// Harmonic mean; 0 when both inputs are 0.
inline double fscore(double p, double r) {
    if (p + r == 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

/// Share of annotated toponyms that were recognized (tp under inexact matching).
inline std::optional<double> annotation_accuracy(std::size_t tp, std::size_t gold_count) {
    if (gold_count == 0) return std::nullopt;
    return static_cast<double>(tp) / static_cast<double>(gold_count);
}

inline std::optional<double> annotation_accuracy(const MatchReport& report, std::size_t gold_count) {
    return annotation_accuracy(report.tp, gold_count);
}

inline std::optional<double> mean_error_distance(std::span<const double> d) {
    if (d.empty()) return std::nullopt;
    double sum = 0.0;
    for (double x : d) sum += x;
    return sum / static_cast<double>(d.size());
}

/// Median; even counts average the two central values.
inline std::optional<double> median_error_distance(std::span<const double> d) {
    if (d.empty()) return std::nullopt;
    std::vector<double> v(d.begin(), d.end());
    std::sort(v.begin(), v.end());
    auto n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

/// Share of distances at or below `threshold_km` (161 km by default, boundary included).
inline std::optional<double> accuracy_at_161(std::span<const double> d, double threshold_km = kAccuracyThresholdKm) {
    if (d.empty()) return std::nullopt;
    auto hits = std::count_if(d.begin(), d.end(), [&](double x) { return x <= threshold_km; });
    return static_cast<double>(hits) / static_cast<double>(d.size());
}

/// Area under the normalized log error curve, ln(ed + 1) / ln(max error) per toponym,
/// each term capped at 1. Lower is better.
inline std::optional<double> auc_error(std::span<const double> d) {
    if (d.empty()) return std::nullopt;
    const double denom = std::log(kMaxErrorKm);
    double area = 0.0;
    for (double x : d) area += std::min(1.0, std::log(x + 1.0) / denom);
    return area / static_cast<double>(d.size());
}

enum class Metric { precision, recall, fscore, accuracy, med, mdned, acc_at_161, auc };

inline constexpr Metric kAllMetrics[] = {Metric::precision, Metric::recall, Metric::fscore,     Metric::accuracy,
                                         Metric::med,       Metric::mdned,  Metric::acc_at_161, Metric::auc};

inline std::string_view to_string(Metric m) {
    switch (m) {
        case Metric::precision: return "precision";
        case Metric::recall: return "recall";
        case Metric::fscore: return "fscore";
        case Metric::accuracy: return "accuracy";
        case Metric::med: return "med";
        case Metric::mdned: return "mdned";
        case Metric::acc_at_161: return "acc_at_161";
        case Metric::auc: break;
    }
    return "auc";
}

inline std::optional<Metric> parse_metric(std::string_view s) {
    for (auto m : kAllMetrics)
        if (to_string(m) == s) return m;
    return std::nullopt;
}

/// Metrics that need every toponym annotated.
inline bool needs_full_annotation(Metric m) {
    return m == Metric::precision || m == Metric::recall || m == Metric::fscore;
}

struct MetricValue {
    enum class Kind { value, not_applicable, undefined, failed };
    Kind kind = Kind::undefined;
    double value = 0.0;

    static MetricValue of(std::optional<double> v) { return v ? MetricValue{Kind::value, *v} : MetricValue{}; }
    static MetricValue not_applicable() { return {Kind::not_applicable, 0.0}; }
    static MetricValue failed() { return {Kind::failed, 0.0}; }
    bool has_value() const noexcept { return kind == Kind::value; }

    friend bool operator==(const MetricValue&, const MetricValue&) = default;
};

/// One (corpus, geoparser) row of a metric table.
struct MetricRow {
    std::string corpus_id;
    std::string geoparser_id;
    bool failed = false;
    std::optional<std::string> failure_detail;
    Confusion counts;
    std::size_t gold_count = 0;
    std::size_t distance_count = 0;
    std::map<Metric, MetricValue> cells;

    friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

/// Pooled evaluation of one geoparser run: match reports and error distances are aggregated
/// over all entries before metrics are computed. P/R/F are not applicable on corpora that are
/// not fully annotated. Gold spans without a footprint count for recognition only.
inline MetricRow evaluate_run(const Corpus& corpus, std::span<const GeoparseResult> results, const std::set<Metric>& selected,
                              MatchMode mode = MatchMode::inexact) {
    std::unordered_map<std::string_view, const GeoparseResult*> by_entry;
    for (const auto& r : results)
        if (!by_entry.emplace(r.entry_id, &r).second) throw ValidationError("duplicate result for entry '" + r.entry_id + "'");
    if (by_entry.size() != corpus.entries.size())
        throw ValidationError("results cover " + std::to_string(by_entry.size()) + " entries, corpus has " +
                              std::to_string(corpus.entries.size()));

    MetricRow row;
    row.corpus_id = corpus.id;
    std::vector<double> distances;
    for (const auto& entry : corpus.entries) {
        auto it = by_entry.find(entry.entry_id);
        if (it == by_entry.end()) throw ValidationError("no result for entry '" + entry.entry_id + "'");
        if (row.geoparser_id.empty()) row.geoparser_id = it->second->parser;
        auto report = match_spans(entry.annotations, it->second->toponyms, mode);
        row.counts += count_confusion(report);
        row.gold_count += entry.annotations.size();
        for (const auto& pair : report.pairs)
            if (pair.gold.footprint && pair.pred.footprint)
                distances.push_back(error_distance_km(*pair.gold.footprint, *pair.pred.footprint));
    }
    row.distance_count = distances.size();

    auto p = precision(row.counts.tp, row.counts.fp);
    auto r = recall(row.counts.tp, row.counts.fn);
    for (auto m : selected) {
        if (needs_full_annotation(m) && !corpus.fully_annotated) {
            row.cells[m] = MetricValue::not_applicable();
            continue;
        }
        switch (m) {
            case Metric::precision: row.cells[m] = MetricValue::of(p); break;
            case Metric::recall: row.cells[m] = MetricValue::of(r); break;
            case Metric::fscore:
                row.cells[m] = (p && r) ? MetricValue::of(fscore(*p, *r)) : MetricValue{};
                break;
            case Metric::accuracy: row.cells[m] = MetricValue::of(annotation_accuracy(row.counts.tp, row.gold_count)); break;
            case Metric::med: row.cells[m] = MetricValue::of(mean_error_distance(distances)); break;
            case Metric::mdned: row.cells[m] = MetricValue::of(median_error_distance(distances)); break;
            case Metric::acc_at_161: row.cells[m] = MetricValue::of(accuracy_at_161(distances)); break;
            case Metric::auc: row.cells[m] = MetricValue::of(auc_error(distances)); break;
        }
    }
    return row;
}

}  // namespace geoeval
