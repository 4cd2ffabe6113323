#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <tuple>
#include <vector>

#include "geoeval/corpus.hpp"

namespace geoeval {

struct MatchedPair {
    ToponymSpan gold;
    ToponymSpan pred;

    friend bool operator==(const MatchedPair&, const MatchedPair&) = default;
};

struct MatchReport {
    std::vector<MatchedPair> pairs;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::vector<ToponymSpan> unmatched_gold;
    std::vector<ToponymSpan> unmatched_pred;

    friend bool operator==(const MatchReport&, const MatchReport&) = default;
};

struct Confusion {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    Confusion& operator+=(const Confusion& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    friend bool operator==(const Confusion&, const Confusion&) = default;
};

enum class MatchMode { inexact, exact };

/// True when the inclusive ranges share at least one character position.
inline bool spans_overlap(const ToponymSpan& a, const ToponymSpan& b) noexcept {
    return a.start <= b.end && b.start <= a.end;
}

inline std::size_t overlap_length(const ToponymSpan& a, const ToponymSpan& b) noexcept {
    if (!spans_overlap(a, b)) return 0;
    return std::min(a.end, b.end) - std::max(a.start, b.start) + 1;
}

namespace detail {

// Total order over spans used for tie-breaking, so results do not depend on input order.
inline bool span_before(const ToponymSpan& a, const ToponymSpan& b) {
    auto key = [](const ToponymSpan& s) {
        return std::make_tuple(s.start, s.end, std::string_view(s.phrase), s.footprint.has_value(),
                               s.footprint ? s.footprint->lon : 0.0, s.footprint ? s.footprint->lat : 0.0);
    };
    return key(a) < key(b);
}

}  // namespace detail

/// Greedy one-to-one alignment. Gold spans are visited in ascending start order; each takes the
/// free prediction with the largest character overlap, ties going to the smaller prediction start.
/// In exact mode only identical (start, end) ranges match.
inline MatchReport match_spans(std::span<const ToponymSpan> gold, std::span<const ToponymSpan> pred,
                               MatchMode mode = MatchMode::inexact) {
    std::vector<std::size_t> gold_order(gold.size());
    std::iota(gold_order.begin(), gold_order.end(), 0);
    std::stable_sort(gold_order.begin(), gold_order.end(),
                     [&](std::size_t a, std::size_t b) { return detail::span_before(gold[a], gold[b]); });
    std::vector<std::size_t> pred_order(pred.size());
    std::iota(pred_order.begin(), pred_order.end(), 0);
    std::stable_sort(pred_order.begin(), pred_order.end(),
                     [&](std::size_t a, std::size_t b) { return detail::span_before(pred[a], pred[b]); });

    MatchReport report;
    std::vector<bool> taken(pred.size(), false);
    for (auto g : gold_order) {
        std::size_t best_overlap = 0;
        std::size_t best = pred.size();
        // pred_order is sorted by start, so the first maximal overlap has the smallest start.
        for (auto p : pred_order) {
            if (taken[p]) continue;
            std::size_t ov = 0;
            if (mode == MatchMode::exact)
                ov = (gold[g].start == pred[p].start && gold[g].end == pred[p].end) ? gold[g].length() : 0;
            else
                ov = overlap_length(gold[g], pred[p]);
            if (ov > best_overlap) {
                best_overlap = ov;
                best = p;
            }
        }
        if (best == pred.size()) {
            report.unmatched_gold.push_back(gold[g]);
            continue;
        }
        taken[best] = true;
        report.pairs.push_back({gold[g], pred[best]});
    }
    for (auto p : pred_order)
        if (!taken[p]) report.unmatched_pred.push_back(pred[p]);
    report.tp = report.pairs.size();
    report.fp = report.unmatched_pred.size();
    report.fn = report.unmatched_gold.size();
    return report;
}

inline Confusion count_confusion(const MatchReport& report) {
    return Confusion{report.pairs.size(), report.unmatched_pred.size(), report.unmatched_gold.size()};
}

}  // namespace geoeval
