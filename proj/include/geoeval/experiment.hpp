#pragma once

#include <openssl/rand.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "geoeval/cache.hpp"
#include "geoeval/corpus.hpp"
#include "geoeval/error.hpp"
#include "geoeval/geoparse.hpp"
#include "geoeval/matching.hpp"
#include "geoeval/metrics.hpp"
#include "geoeval/parallel.hpp"
#include "geoeval/store.hpp"

namespace geoeval {

using Timestamp = std::chrono::sys_time<std::chrono::microseconds>;

enum class ExperimentStatus { running, complete, failed };

inline std::string_view to_string(ExperimentStatus s) {
    switch (s) {
        case ExperimentStatus::running: return "running";
        case ExperimentStatus::complete: return "complete";
        case ExperimentStatus::failed: break;
    }
    return "failed";
}

inline std::optional<ExperimentStatus> parse_experiment_status(std::string_view s) {
    for (auto v : {ExperimentStatus::running, ExperimentStatus::complete, ExperimentStatus::failed})
        if (to_string(v) == s) return v;
    return std::nullopt;
}

struct ExperimentRecord {
    std::string experiment_id;
    Timestamp created_at{};
    std::vector<std::string> corpora;
    std::vector<GeoparserRef> geoparsers;
    std::vector<Metric> metrics;
    std::vector<MetricRow> results;
    ExperimentStatus status = ExperimentStatus::running;
    std::optional<std::string> failure_detail;

    friend bool operator==(const ExperimentRecord&, const ExperimentRecord&) = default;
};

inline constexpr std::string_view kIdAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
inline constexpr std::size_t kIdLength = 16;

inline bool is_valid_experiment_id(std::string_view id) {
    if (id.size() != kIdLength) return false;
    for (char c : id)
        if (kIdAlphabet.find(c) == std::string_view::npos) return false;
    return true;
}

using RandomBytes = std::function<void(std::span<unsigned char>)>;

inline void crypto_random_bytes(std::span<unsigned char> out) {
    if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) throw Error("system random source failed");
}

/// 16 characters uniform over A-Z0-9 (rejection sampling on random bytes).
inline std::string random_experiment_id(const RandomBytes& source = crypto_random_bytes) {
    constexpr unsigned limit = 256 - 256 % kIdAlphabet.size();
    std::string id;
    unsigned char buf[32];
    while (id.size() < kIdLength) {
        source(buf);
        for (unsigned char b : buf) {
            if (b >= limit) continue;
            id += kIdAlphabet[b % kIdAlphabet.size()];
            if (id.size() == kIdLength) break;
        }
    }
    return id;
}

/// A fresh id not present in the store; collisions are retried.
inline std::string generate_experiment_id(CacheStore& store, const RandomBytes& source = crypto_random_bytes) {
    for (;;) {
        auto id = random_experiment_id(source);
        if (!store.experiment_exists(id)) return id;
    }
}

// --- timestamps ---

inline std::string format_timestamp(Timestamp t) {
    auto secs = std::chrono::floor<std::chrono::seconds>(t);
    auto micros = (t - secs).count();
    std::time_t tt = std::chrono::system_clock::to_time_t(secs);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[40];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%06lldZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                  tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<long long>(micros));
    return buf;
}

inline Timestamp parse_timestamp(std::string_view s) {
    std::tm tm{};
    long long micros = 0;
    int consumed = 0;
    std::string str(s);
    if (std::sscanf(str.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d.%6lldZ%n", &tm.tm_year, &tm.tm_mon, &tm.tm_mday, &tm.tm_hour,
                    &tm.tm_min, &tm.tm_sec, &micros, &consumed) != 7 ||
        consumed != static_cast<int>(str.size()))
        throw ValidationError("invalid timestamp \"" + str + "\"");
    tm.tm_year -= 1900;
    tm.tm_mon -= 1;
    auto secs = std::chrono::system_clock::from_time_t(timegm(&tm));
    return std::chrono::time_point_cast<std::chrono::microseconds>(secs) + std::chrono::microseconds(micros);
}

inline Timestamp now_timestamp() { return std::chrono::time_point_cast<std::chrono::microseconds>(std::chrono::system_clock::now()); }

// --- JSON ---

inline nlohmann::json to_json(const MetricValue& v) {
    switch (v.kind) {
        case MetricValue::Kind::value: return v.value;
        case MetricValue::Kind::not_applicable: return "not_applicable";
        case MetricValue::Kind::undefined: return "undefined";
        case MetricValue::Kind::failed: break;
    }
    return "failed";
}

inline MetricValue metric_value_from_json(const nlohmann::json& j) {
    if (j.is_number()) return {MetricValue::Kind::value, j.get<double>()};
    auto s = j.get<std::string>();
    if (s == "not_applicable") return MetricValue::not_applicable();
    if (s == "undefined") return MetricValue{};
    if (s == "failed") return MetricValue::failed();
    throw ValidationError("unknown metric cell \"" + s + "\"");
}

inline nlohmann::json to_json(const MetricRow& row) {
    nlohmann::json cells = nlohmann::json::object();
    for (const auto& [m, v] : row.cells) cells[std::string(to_string(m))] = to_json(v);
    nlohmann::json j{{"corpus", row.corpus_id},
                     {"geoparser", row.geoparser_id},
                     {"status", row.failed ? "failed" : "complete"},
                     {"counts",
                      {{"tp", row.counts.tp},
                       {"fp", row.counts.fp},
                       {"fn", row.counts.fn},
                       {"gold", row.gold_count},
                       {"distances", row.distance_count}}},
                     {"metrics", std::move(cells)}};
    if (row.failure_detail) j["failure_detail"] = *row.failure_detail;
    return j;
}

inline MetricRow metric_row_from_json(const nlohmann::json& j) {
    MetricRow row;
    row.corpus_id = j.at("corpus").get<std::string>();
    row.geoparser_id = j.at("geoparser").get<std::string>();
    row.failed = j.at("status").get<std::string>() == "failed";
    if (j.contains("failure_detail")) row.failure_detail = j["failure_detail"].get<std::string>();
    const auto& c = j.at("counts");
    row.counts = {c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(), c.at("fn").get<std::size_t>()};
    row.gold_count = c.at("gold").get<std::size_t>();
    row.distance_count = c.at("distances").get<std::size_t>();
    for (const auto& [name, v] : j.at("metrics").items()) {
        auto m = parse_metric(name);
        if (!m) throw ValidationError("unknown metric \"" + name + "\"");
        row.cells[*m] = metric_value_from_json(v);
    }
    return row;
}

/// Export document mirroring the record fields; `results` is absent while running.
inline nlohmann::json to_json(const ExperimentRecord& r) {
    nlohmann::json j{{"experiment_id", r.experiment_id},
                     {"created_at", format_timestamp(r.created_at)},
                     {"status", to_string(r.status)},
                     {"corpora", r.corpora}};
    auto parsers = nlohmann::json::array();
    for (const auto& g : r.geoparsers) parsers.push_back(to_json(g));
    j["geoparsers"] = std::move(parsers);
    auto metrics = nlohmann::json::array();
    for (auto m : r.metrics) metrics.push_back(to_string(m));
    j["metrics"] = std::move(metrics);
    if (r.status != ExperimentStatus::running) {
        auto rows = nlohmann::json::array();
        for (const auto& row : r.results) rows.push_back(to_json(row));
        j["results"] = std::move(rows);
    }
    if (r.failure_detail) j["failure_detail"] = *r.failure_detail;
    return j;
}

inline ExperimentRecord experiment_record_from_json(const nlohmann::json& j) {
    ExperimentRecord r;
    r.experiment_id = j.at("experiment_id").get<std::string>();
    r.created_at = parse_timestamp(j.at("created_at").get<std::string>());
    auto status = parse_experiment_status(j.at("status").get<std::string>());
    if (!status) throw ValidationError("unknown experiment status");
    r.status = *status;
    r.corpora = j.at("corpora").get<std::vector<std::string>>();
    for (const auto& g : j.at("geoparsers")) r.geoparsers.push_back(geoparser_ref_from_json(g));
    for (const auto& m : j.at("metrics")) {
        auto metric = parse_metric(m.get<std::string>());
        if (!metric) throw ValidationError("unknown metric in record");
        r.metrics.push_back(*metric);
    }
    if (j.contains("results"))
        for (const auto& row : j["results"]) r.results.push_back(metric_row_from_json(row));
    if (j.contains("failure_detail")) r.failure_detail = j["failure_detail"].get<std::string>();
    return r;
}

// --- running experiments ---

/// What to run: every corpus against every geoparser, scored with the selected metrics.
struct ExperimentPlan {
    std::vector<std::shared_ptr<const Corpus>> corpora;
    std::vector<std::shared_ptr<Geoparser>> geoparsers;
    std::set<Metric> metrics;
    std::size_t parallelism = 4;
    MatchMode match_mode = MatchMode::inexact;
};

inline void validate_plan(const ExperimentPlan& plan) {
    if (plan.corpora.empty()) throw ValidationError("select at least one corpus");
    if (plan.geoparsers.empty()) throw ValidationError("select at least one geoparser");
    if (plan.metrics.empty()) throw ValidationError("select at least one metric");
    std::set<std::string_view> seen;
    for (const auto& c : plan.corpora)
        if (!seen.insert(c->id).second) throw ValidationError("corpus '" + c->id + "' selected twice");
    seen.clear();
    for (const auto& g : plan.geoparsers)
        if (!seen.insert(g->ref().id).second) throw ValidationError("geoparser '" + g->ref().id + "' selected twice");
}

/// Validates the plan and persists a running record under a fresh id.
inline ExperimentRecord begin_experiment(CacheStore& store, const ExperimentPlan& plan, Timestamp created_at = now_timestamp()) {
    validate_plan(plan);
    ExperimentRecord record;
    record.created_at = created_at;
    for (const auto& c : plan.corpora) record.corpora.push_back(c->id);
    for (const auto& g : plan.geoparsers) record.geoparsers.push_back(g->ref());
    record.metrics.assign(plan.metrics.begin(), plan.metrics.end());
    record.status = ExperimentStatus::running;
    for (;;) {
        record.experiment_id = generate_experiment_id(store);
        auto micros = record.created_at.time_since_epoch().count();
        if (store.insert_experiment(record.experiment_id, micros, to_string(record.status), to_json(record).dump())) break;
    }
    return record;
}

/// Computes every (corpus, geoparser) cell and stores the finished record. A failed cell
/// fails the whole record but the other cells are still computed.
inline ExperimentRecord execute_experiment(CacheStore& store, ExperimentRecord record, const ExperimentPlan& plan) {
    const auto n_parsers = plan.geoparsers.size();
    std::vector<MetricRow> rows(plan.corpora.size() * n_parsers);
    parallel_for(rows.size(), plan.parallelism, [&](std::size_t cell) {
        const auto& corpus = *plan.corpora[cell / n_parsers];
        auto& parser = *plan.geoparsers[cell % n_parsers];
        auto& row = rows[cell];
        try {
            auto results = cached_geoparse(store, parser, corpus, plan.parallelism);
            row = evaluate_run(corpus, results, plan.metrics, plan.match_mode);
        } catch (const std::exception& e) {
            row = MetricRow{};
            row.failed = true;
            row.failure_detail = e.what();
            for (auto m : plan.metrics) row.cells[m] = MetricValue::failed();
        }
        row.corpus_id = corpus.id;
        row.geoparser_id = parser.ref().id;
    });

    record.results = std::move(rows);
    std::string detail;
    for (const auto& row : record.results)
        if (row.failed) detail += (detail.empty() ? "" : "; ") + row.corpus_id + " x " + row.geoparser_id + ": " + *row.failure_detail;
    record.status = detail.empty() ? ExperimentStatus::complete : ExperimentStatus::failed;
    if (!detail.empty()) record.failure_detail = detail;
    if (!store.update_experiment(record.experiment_id, to_string(record.status), to_json(record).dump()))
        throw StoreError("experiment " + record.experiment_id + " is no longer running");
    return record;
}

inline ExperimentRecord run_experiment(CacheStore& store, const ExperimentPlan& plan) {
    auto record = begin_experiment(store, plan);
    return execute_experiment(store, std::move(record), plan);
}

/// Exact-id lookup. Malformed ids raise ValidationError; unknown ids give nullopt.
inline std::optional<ExperimentRecord> find_experiment(CacheStore& store, std::string_view id) {
    if (!is_valid_experiment_id(id)) throw ValidationError("experiment ids are 16 characters from A-Z and 0-9: \"" + std::string(id) + "\"");
    auto stored = store.experiment(id);
    if (!stored) return std::nullopt;
    return experiment_record_from_json(nlohmann::json::parse(stored->record_json));
}

struct ExperimentSummary {
    std::string experiment_id;
    Timestamp created_at{};
    ExperimentStatus status = ExperimentStatus::running;
    std::vector<std::string> corpora;
    std::vector<std::string> geoparsers;
};

struct ExperimentPage {
    std::vector<ExperimentSummary> items;
    std::optional<std::string> next_cursor;
};

inline nlohmann::json to_json(const ExperimentSummary& s) {
    return {{"experiment_id", s.experiment_id},
            {"created_at", format_timestamp(s.created_at)},
            {"status", to_string(s.status)},
            {"corpora", s.corpora},
            {"geoparsers", s.geoparsers}};
}

/// Newest-first listing with an opaque keyset cursor ("<micros>-<seq>").
inline ExperimentPage list_experiments(CacheStore& store, std::optional<std::string_view> cursor = std::nullopt,
                                       std::size_t page_size = 20) {
    std::optional<ListCursor> after;
    if (cursor && !cursor->empty()) {
        auto dash = cursor->find('-', 1);
        auto micros = dash == std::string_view::npos ? std::nullopt : detail::parse_int<std::int64_t>(cursor->substr(0, dash));
        auto seq = dash == std::string_view::npos ? std::nullopt : detail::parse_int<std::int64_t>(cursor->substr(dash + 1));
        if (!micros || !seq) throw ValidationError("invalid page cursor \"" + std::string(*cursor) + "\"");
        after = ListCursor{*micros, *seq};
    }
    page_size = std::max<std::size_t>(page_size, 1);
    auto rows = store.list_experiments(after, static_cast<std::int64_t>(page_size) + 1);
    ExperimentPage page;
    for (std::size_t i = 0; i < rows.size() && i < page_size; ++i) {
        auto j = nlohmann::json::parse(rows[i].record_json);
        ExperimentSummary s;
        s.experiment_id = rows[i].id;
        s.created_at = Timestamp(std::chrono::microseconds(rows[i].created_at_us));
        s.status = parse_experiment_status(rows[i].status).value_or(ExperimentStatus::failed);
        s.corpora = j.at("corpora").get<std::vector<std::string>>();
        for (const auto& g : j.at("geoparsers")) s.geoparsers.push_back(g.at("id").get<std::string>());
        page.items.push_back(std::move(s));
    }
    if (rows.size() > page_size) {
        const auto& last = rows[page_size - 1];
        page.next_cursor = std::to_string(last.created_at_us) + "-" + std::to_string(last.seq);
    }
    return page;
}

}  // namespace geoeval
