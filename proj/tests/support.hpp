#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "geoeval/corpus.hpp"
#include "geoeval/geoparse.hpp"
#include "geoeval/registry.hpp"
#include "geoeval/utf8.hpp"

namespace testsupport {

using namespace geoeval;

inline std::string fixture(const std::string& name) { return std::string(GEOEVAL_FIXTURES) + "/" + name; }

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("geoeval-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

// --- reference formulas, written independently of the library ---

inline constexpr double kRadius = 6371.0;

/// Great-circle distance by the atan2 (Vincenty sphere) form, accurate at every separation.
inline double sphere_distance(double lon1, double lat1, double lon2, double lat2) {
    const double r = std::numbers::pi / 180.0;
    double p1 = lat1 * r, p2 = lat2 * r, dl = (lon2 - lon1) * r;
    double a = std::cos(p2) * std::sin(dl);
    double b = std::cos(p1) * std::sin(p2) - std::sin(p1) * std::cos(p2) * std::cos(dl);
    double c = std::sin(p1) * std::sin(p2) + std::cos(p1) * std::cos(p2) * std::cos(dl);
    return kRadius * std::atan2(std::hypot(a, b), c);
}

struct ReferenceMetrics {
    std::optional<double> precision, recall, fscore, accuracy, med, mdned, acc161, auc;
};

/// Metrics computed literally: ratios of counts, mean, sorted median, threshold count, and the
/// area of the step curve of normalized log errors sampled at N equal-width rectangles.
inline ReferenceMetrics reference_metrics(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t gold, std::vector<double> ed) {
    ReferenceMetrics m;
    if (tp + fp > 0) m.precision = double(tp) / double(tp + fp);
    if (tp + fn > 0) m.recall = double(tp) / double(tp + fn);
    if (m.precision && m.recall) {
        double p = *m.precision, r = *m.recall;
        m.fscore = (p + r) > 0 ? (2 * p * r) / (p + r) : 0.0;
    }
    if (gold > 0) m.accuracy = double(tp) / double(gold);
    if (!ed.empty()) {
        const double n = double(ed.size());
        double total = 0;
        for (double d : ed) total += d;
        m.med = total / n;
        std::sort(ed.begin(), ed.end());
        auto mid = ed.size() / 2;
        m.mdned = ed.size() % 2 ? ed[mid] : (ed[mid - 1] + ed[mid]) / 2;
        std::size_t within = 0;
        for (double d : ed) within += d <= 161.0 ? 1 : 0;
        m.acc161 = double(within) / n;
        const double max_error = std::numbers::pi * kRadius;
        double area = 0;
        const double width = 1.0 / n;
        for (double d : ed) {
            double h = std::log(d + 1) / std::log(max_error);
            area += width * (h > 1 ? 1 : h);
        }
        m.auc = area;
    }
    return m;
}

// --- generators ---

/// Random text over a mixed alphabet: ASCII letters, spaces, punctuation, XML specials,
/// accented Latin, CJK and an astral-plane character.
inline std::u32string random_text(std::mt19937_64& rng, std::size_t min_len, std::size_t max_len) {
    static const std::u32string alphabet = U"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ     ,.;'\"&<>-\n\téüßñ東京北\U0001F30D";
    std::uniform_int_distribution<std::size_t> len(min_len, max_len);
    std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
    std::u32string out(len(rng), U' ');
    for (auto& c : out) c = alphabet[pick(rng)];
    return out;
}

inline std::string random_word(std::mt19937_64& rng, std::size_t max_len = 8) {
    static const std::string letters = "abcdefghijklmnopqrstuvwxyz";
    std::uniform_int_distribution<std::size_t> len(1, max_len);
    std::uniform_int_distribution<std::size_t> pick(0, letters.size() - 1);
    std::string out(len(rng), 'a');
    for (auto& c : out) c = letters[pick(rng)];
    return out;
}

inline GeoPoint random_point(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> lon(-180.0, 180.0), lat(-90.0, 90.0);
    return GeoPoint{lon(rng), lat(rng)};
}

/// A corpus satisfying every invariant, exercising optional fields and opaque elements.
inline Corpus random_corpus(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> entries(0, 6), spans(0, 5), coin(0, 1), genre(0, 4);
    Corpus c;
    if (coin(rng)) c.id = "c-" + random_word(rng);
    if (coin(rng)) c.name = "Corpus " + random_word(rng) + " & <" + random_word(rng) + ">";
    c.genre = static_cast<Genre>(genre(rng));
    c.fully_annotated = coin(rng) == 1;
    int n = entries(rng);
    for (int i = 0; i < n; ++i) {
        CorpusEntry e;
        e.entry_id = coin(rng) ? "e" + std::to_string(i) + random_word(rng, 3) : std::to_string(i + 1);
        auto text = random_text(rng, 1, 60);
        e.text = utf8::encode(text);
        int k = spans(rng);
        for (int j = 0; j < k; ++j) {
            std::uniform_int_distribution<std::size_t> s(0, text.size() - 1);
            std::size_t a = s(rng), b = s(rng);
            if (a > b) std::swap(a, b);
            ToponymSpan t;
            t.start = a;
            t.end = b;
            t.phrase = utf8::encode(std::u32string_view(text).substr(a, b - a + 1));
            if (coin(rng)) t.footprint = random_point(rng);
            if (coin(rng)) t.place_name = "Place " + random_word(rng) + " \"q\"";
            if (coin(rng)) t.place_type = "ADM" + std::to_string(j);
            if (coin(rng)) t.place_extras.push_back(OpaqueElement{"geonameid", {}, std::to_string(rng() % 100000)});
            if (coin(rng))
                t.extras.push_back(OpaqueElement{"category", {{"kind", "lit&eral"}}, "<sub a=\"1\">x</sub>"});
            e.annotations.push_back(std::move(t));
        }
        c.entries.push_back(std::move(e));
    }
    return c;
}

/// Random span list over [0, text_len) with optional footprints.
inline std::vector<ToponymSpan> random_spans(std::mt19937_64& rng, std::size_t count, std::size_t text_len) {
    std::uniform_int_distribution<std::size_t> pos(0, text_len - 1), width(0, 6);
    std::vector<ToponymSpan> out;
    for (std::size_t i = 0; i < count; ++i) {
        ToponymSpan s;
        s.start = pos(rng);
        s.end = std::min(text_len - 1, s.start + width(rng));
        s.phrase = "p" + std::to_string(i);
        s.footprint = random_point(rng);
        out.push_back(s);
    }
    return out;
}

/// Point `km` kilometres due north of `p` along its meridian (p.lat + km is assumed to stay below 90).
inline GeoPoint north_of(GeoPoint p, double km) { return GeoPoint{p.lon, p.lat + km / kRadius * 180.0 / std::numbers::pi}; }

// --- injected-error fixture ---

struct InjectedErrorFixture {
    Corpus corpus;
    ReplayFixture predictions;
    std::size_t gold = 0, dropped = 0, displaced = 0;
};

/// 50 entries, one gold toponym each. The replay output omits 20% of the gold spans and moves
/// 10% of them 200 km north; the rest are returned exactly.
inline InjectedErrorFixture injected_error_fixture() {
    InjectedErrorFixture f;
    f.corpus.id = "synthetic-50";
    f.corpus.name = "Synthetic 50";
    std::mt19937_64 rng(20190423);
    for (int i = 0; i < 50; ++i) {
        CorpusEntry e;
        e.entry_id = "s" + std::to_string(i);
        std::string place = "Place" + std::to_string(i);
        e.text = "Report " + std::to_string(i) + ": crews reached " + place + " before dawn.";
        ToponymSpan gold;
        gold.start = utf8::length(e.text.substr(0, e.text.find(place)));
        gold.end = gold.start + utf8::length(place) - 1;
        gold.phrase = place;
        std::uniform_real_distribution<double> lon(-170, 170), lat(-60, 60);
        gold.footprint = GeoPoint{lon(rng), lat(rng)};
        e.annotations.push_back(gold);
        ++f.gold;
        if (i % 5 == 0) {  // 10 of 50 dropped
            ++f.dropped;
        } else {
            ToponymSpan pred = gold;
            if (i % 10 == 1) {  // 5 of 50 displaced
                pred.footprint = north_of(*gold.footprint, 200.0);
                ++f.displaced;
            }
            f.predictions[e.entry_id].push_back(pred);
        }
        f.corpus.entries.push_back(std::move(e));
    }
    return f;
}

}  // namespace testsupport
