// Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <random>
#include <regex>
#include <sstream>
#include <sys/wait.h>

#include "geoeval/experiment.hpp"
#include "geoeval/matching.hpp"
#include "geoeval/metrics.hpp"
#include "support.hpp"

using namespace geoeval;
using testsupport::fixture;

namespace {

// Tolerances.
constexpr double kOracleTol = 1e-9;
constexpr double kConstantTol = 0.001;
constexpr double kAucEndpointTol = 1e-9;
constexpr double kOracleBudgetSeconds = 10.0;
constexpr double kSuiteBudgetSeconds = 300.0;

struct Check {
    bool ok = true;
    std::ostringstream why;

    template <class T>
    void expect(bool cond, const T& msg) {
        if (!cond && ok) why << msg;
        ok = ok && cond;
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

/// Great-circle distance written out from the haversine definition.
double reference_distance(GeoPoint a, GeoPoint b) {
    const double rad = std::numbers::pi / 180.0;
    double h = std::pow(std::sin((b.lat - a.lat) * rad / 2), 2) +
               std::cos(a.lat * rad) * std::cos(b.lat * rad) * std::pow(std::sin((b.lon - a.lon) * rad / 2), 2);
    return 2 * testsupport::kRadius * std::asin(std::sqrt(std::min(1.0, h)));
}

std::set<Metric> all_metrics() { return {std::begin(kAllMetrics), std::end(kAllMetrics)}; }

std::optional<double> cell(const MetricRow& row, Metric m) {
    const auto& v = row.cells.at(m);
    if (!v.has_value()) return std::nullopt;
    return v.value;
}

// 1
void metric_oracle(Check& c) {
    auto t0 = Clock::now();
    std::mt19937_64 rng(1001);
    std::size_t compared = 0;
    for (int i = 0; i < 1000 && c.ok; ++i) {
        Corpus corpus;
        corpus.fully_annotated = true;
        std::vector<GeoparseResult> results;
        std::size_t tp = 0, fp = 0, fn = 0, gold = 0;
        std::vector<double> ed;
        const std::size_t pair_budget = rng() % 21;
        for (int e = 0; e < 4; ++e) {
            CorpusEntry entry{"e" + std::to_string(e), std::string(48, 'x'), {}};
            GeoparseResult r{entry.entry_id, {}, "p", {}};
            for (std::size_t pos = 0; pos < 48; pos += 4) {
                int kind = int(rng() % 4);
                if (kind >= 2 && tp == pair_budget) kind = 1;
                ToponymSpan g{pos, pos + 1, "xx", testsupport::random_point(rng), {}, {}, {}, {}};
                if (kind > 0) {
                    entry.annotations.push_back(g);
                    ++gold;
                }
                if (kind == 1) ++fn;
                if (kind >= 2) {
                    ToponymSpan p = g;
                    // Exact hits or a one-character shift; both overlap only this gold span.
                    if (kind == 3) p.start = p.end = pos + 1;
                    p.footprint = rng() % 5 == 0 ? g.footprint : testsupport::random_point(rng);
                    r.toponyms.push_back(p);
                    ++tp;
                    ed.push_back(reference_distance(*g.footprint, *p.footprint));
                }
                if (kind == 0 && rng() % 2) {
                    r.toponyms.push_back(ToponymSpan{pos + 2, pos + 3, "xx", GeoPoint{0, 0}, {}, {}, {}, {}});
                    ++fp;
                }
            }
            corpus.entries.push_back(entry);
            results.push_back(r);
        }
        auto row = evaluate_run(corpus, results, all_metrics());
        auto ref = testsupport::reference_metrics(tp, fp, fn, gold, ed);
        std::pair<Metric, std::optional<double>> expected[] = {
            {Metric::precision, ref.precision}, {Metric::recall, ref.recall}, {Metric::fscore, ref.fscore},
            {Metric::accuracy, ref.accuracy},   {Metric::med, ref.med},       {Metric::mdned, ref.mdned},
            {Metric::acc_at_161, ref.acc161},   {Metric::auc, ref.auc}};
        c.expect(row.counts.tp == tp && row.counts.fp == fp && row.counts.fn == fn, "instance " + std::to_string(i) + ": counts differ");
        for (auto [m, want] : expected) {
            auto got = cell(row, m);
            bool same = got.has_value() == want.has_value() && (!got || std::abs(*got - *want) <= kOracleTol);
            std::ostringstream msg;
            msg.precision(17);
            msg << "instance " << i << " " << to_string(m) << ": got " << (got ? std::to_string(*got) : "undefined") << ", want "
                << (want ? std::to_string(*want) : "undefined");
            c.expect(same, msg.str());
            ++compared;
        }
    }
    double elapsed = seconds_since(t0);
    c.expect(elapsed < kOracleBudgetSeconds, "took " + std::to_string(elapsed) + " s");
    if (c.ok) c.why << compared << " cells, " << elapsed << " s";
}

// 2
void distance_constants(Check& c) {
    double half = error_distance_km({0, 0}, {180, 0});
    double degree = error_distance_km({0, 0}, {0, 1});
    c.expect(std::abs(half - 20015.087) <= kConstantTol, "half circumference " + std::to_string(half));
    c.expect(std::abs(degree - 111.195) <= kConstantTol, "one degree " + std::to_string(degree));
    c.expect(std::abs(kMaxErrorKm - 20015.087) <= kConstantTol, "max error " + std::to_string(kMaxErrorKm));
    if (c.ok) c.why << std::fixed << std::setprecision(4) << half << " km, " << degree << " km";
}

// 3
void acc161_boundary(Check& c) {
    auto a = accuracy_at_161(std::vector<double>{0, 161.0, 162.0});
    c.expect(a && *a == 2.0 / 3.0, "got " + (a ? std::to_string(*a) : std::string("undefined")));
}

// 4
void auc_endpoints(Check& c) {
    auto zero = auc_error(std::vector<double>{0, 0, 0});
    c.expect(zero && *zero == 0.0, "all-zero AUC not 0");
    auto one = auc_error(std::vector<double>{kMaxErrorKm - 1});
    c.expect(one && std::abs(*one - 1.0) <= kAucEndpointTol, "MAX-1 AUC " + (one ? std::to_string(*one) : std::string("undefined")));
    std::mt19937_64 rng(1004);
    std::uniform_real_distribution<double> u(0, kMaxErrorKm);
    for (int i = 0; i < 10000 && c.ok; ++i) {
        std::vector<double> d(1 + rng() % 20);
        for (auto& x : d) x = u(rng);
        double before = *auc_error(d);
        auto& x = d[rng() % d.size()];
        x = std::uniform_real_distribution<double>(x, kMaxErrorKm)(rng);
        c.expect(*auc_error(d) >= before, "AUC decreased in case " + std::to_string(i));
    }
}

// 5
void matching_conservation(Check& c) {
    std::mt19937_64 rng(1005);
    for (int i = 0; i < 10000 && c.ok; ++i) {
        auto gold = testsupport::random_spans(rng, rng() % 12, 60);
        auto pred = testsupport::random_spans(rng, rng() % 12, 60);
        auto r = match_spans(gold, pred);
        c.expect(r.tp + r.fn == gold.size() && r.tp + r.fp == pred.size(), "case " + std::to_string(i));
    }
    std::vector<ToponymSpan> gold{ToponymSpan{4, 18, "Town of Amherst", std::nullopt, {}, {}, {}, {}}};
    std::vector<ToponymSpan> pred{ToponymSpan{12, 18, "Amherst", std::nullopt, {}, {}, {}, {}}};
    auto amherst = match_spans(gold, pred);
    c.expect(amherst.tp == 1 && amherst.fp == 0 && amherst.fn == 0, "Amherst tp=" + std::to_string(amherst.tp));
}

// 6
void fixture_contract(Check& c) {
    auto check_paris = [&](const ToponymSpan& t, const std::string& where) {
        c.expect(t.start == 0 && t.end == 4 && t.phrase == "Paris", where + ": span");
        c.expect(t.footprint && t.footprint->lon == -95.5477 && t.footprint->lat == 33.6625, where + ": footprint");
    };
    auto corpus = parse_unified_corpus(read_file(fixture("paris_corpus.xml")));
    c.expect(corpus.entries.size() == 1 && corpus.entries[0].annotations.size() == 1, "corpus fixture shape");
    if (c.ok) {
        c.expect(corpus.entries[0].text == "Paris is a city in Texas...", "corpus fixture text");
        check_paris(corpus.entries[0].annotations[0], "corpus fixture");
    }
    auto output = parse_output_json(read_file(fixture("paris_output.json")));
    c.expect(output.toponyms.size() == 1, "output fixture shape");
    if (c.ok) {
        check_paris(output.toponyms[0], "output fixture");
        c.expect(output.toponyms[0].place_name == "City of Paris" && output.toponyms[0].place_type == "ADM3", "output fixture place");
    }
    std::mt19937_64 rng(1006);
    for (int i = 0; i < 100 && c.ok; ++i) {
        auto g = testsupport::random_corpus(rng);
        c.expect(parse_unified_corpus(serialize_corpus(g), true) == g, "round trip " + std::to_string(i));
    }
}

// 7
void injected_error(Check& c) {
    auto f = testsupport::injected_error_fixture();
    c.expect(f.gold == 50 && f.dropped == 10 && f.displaced == 5, "fixture proportions");
    auto corpus = std::make_shared<const Corpus>(f.corpus);
    auto parser = std::make_shared<ReplayGeoparser>(GeoparserRef{"injected", "Injected", GeoparserKind::replay, {}, "1", {}, {}}, f.predictions);
    CacheStore store(":memory:");
    ExperimentPlan plan{{corpus}, {parser}, all_metrics()};
    auto record = run_experiment(store, plan);
    const auto& row = record.results.at(0);
    auto eq = [&](Metric m, double want) {
        auto got = cell(row, m);
        c.expect(got && *got == want, std::string(to_string(m)) + " = " + (got ? std::to_string(*got) : "undefined"));
    };
    eq(Metric::recall, 0.8);
    eq(Metric::precision, 1.0);
    eq(Metric::acc_at_161, 0.875);
    eq(Metric::mdned, 0.0);
}

// 8
void partial_gating(Check& c) {
    auto corpus = parse_unified_corpus(read_file(fixture("partial.xml")));
    c.expect(!corpus.fully_annotated, "partial fixture is marked fully annotated");
    auto shared = std::make_shared<const Corpus>(corpus);
    ReplayFixture perfect;
    for (const auto& e : corpus.entries) perfect[e.entry_id] = e.annotations;
    auto parser = std::make_shared<ReplayGeoparser>(GeoparserRef{"perfect", "Perfect", GeoparserKind::replay, {}, "1", {}, {}}, perfect);
    CacheStore store(":memory:");
    auto record = run_experiment(store, ExperimentPlan{{shared}, {parser}, all_metrics()});
    const auto& row = record.results.at(0);
    for (auto m : {Metric::precision, Metric::recall, Metric::fscore})
        c.expect(row.cells.at(m) == MetricValue::not_applicable(), std::string(to_string(m)) + " not gated");
    for (auto m : {Metric::accuracy, Metric::med, Metric::mdned, Metric::acc_at_161, Metric::auc})
        c.expect(row.cells.at(m).has_value(), std::string(to_string(m)) + " missing");
}

std::pair<int, std::string> run_process(const std::string& cmd) {
    FILE* pipe = ::popen((cmd + " 2>&1").c_str(), "r");
    if (!pipe) return {-1, "popen failed"};
    std::string out;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
    int status = ::pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

// 9
void archiving(Check& c) {
    const std::regex id_pattern("^[A-Z0-9]{16}$");
    testsupport::TempDir dir;
    auto corpus = std::make_shared<const Corpus>(parse_unified_corpus(read_file(fixture("paris_corpus.xml"))));
    auto gazetteer = load_builtin_gazetteer(fixture("gazetteer.tsv"));
    std::string id;
    std::vector<MetricRow> first_table;
    {
        CacheStore store(dir.file("store.db"));
        auto parser = std::make_shared<GazpopGeoparser>(gazpop_ref(gazetteer), gazetteer.gazetteer);
        auto record = run_experiment(store, ExperimentPlan{{corpus}, {parser}, all_metrics()});
        id = record.experiment_id;
        first_table = record.results;
        c.expect(std::regex_match(id, id_pattern), "id " + id);
        c.expect(parser->invocations() == corpus->entries.size(), "first run invocations");
    }
    CacheStore reopened(dir.file("store.db"));
    auto found = find_experiment(reopened, id);
    c.expect(found && found->results == first_table, "record missing after reopen");
    auto fresh = std::make_shared<GazpopGeoparser>(gazpop_ref(gazetteer), gazetteer.gazetteer);
    auto second = run_experiment(reopened, ExperimentPlan{{corpus}, {fresh}, all_metrics()});
    c.expect(fresh->invocations() == 0, "second run made " + std::to_string(fresh->invocations()) + " invocations");
    c.expect(second.results == first_table, "second run table differs");

    auto store_arg = " --store " + dir.file("cli.db");
    auto [run_code, run_out] = run_process(std::string(GEOEVAL_TOOL) + " run --corpus " + fixture("paris_corpus.xml") +
                                           " --geoparser gazpop --gazetteer " + fixture("gazetteer.tsv") + " --metrics all --out " +
                                           dir.file("r.json") + store_arg);
    std::string cli_id = run_out.substr(0, run_out.find('\n'));
    c.expect(run_code == 0 && std::regex_match(cli_id, id_pattern), "cli run: " + run_out);
    auto [search_code, search_out] = run_process(std::string(GEOEVAL_TOOL) + " search " + cli_id + store_arg);
    c.expect(search_code == 0 && nlohmann::json::parse(search_out)["experiment_id"] == cli_id, "cli search after restart failed");
}

// 10
void baseline(Check& c) {
    auto gazetteer = load_builtin_gazetteer(fixture("gazetteer.tsv"));
    auto paris = lookup_name(*gazetteer.gazetteer, "Paris");
    c.expect(paris.size() == 2, "fixture lacks two Paris rows");
    auto spans = gazpop_spans(*gazetteer.gazetteer, "Paris is a city in Texas");
    c.expect(!spans.empty() && spans[0].phrase == "Paris", "Paris not recognized");
    if (c.ok) {
        const auto& fp = spans[0].footprint;
        c.expect(fp && fp->lon == 2.3488 && fp->lat == 48.85341, "resolved to the less populous Paris");
    }
    auto nyc = gazpop_spans(*gazetteer.gazetteer, "New York City");
    c.expect(nyc.size() == 1 && nyc[0].phrase == "New York City" && nyc[0].start == 0 && nyc[0].end == 12,
             "New York City gave " + std::to_string(nyc.size()) + " spans");
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string part; std::getline(ss, part, sep);)
        if (!part.empty()) out.push_back(part);
    return out;
}

// 11
void suite_budget(Check& c, Clock::time_point acceptance_start) {
    auto t0 = Clock::now();
    for (const auto& binary : split(GEOEVAL_TEST_BINARIES, ',')) {
        auto [code, out] = run_process(binary + " --gtest_brief=1");
        c.expect(code == 0, binary + " failed");
    }
    double tests = seconds_since(t0);
    double acceptance = std::chrono::duration<double>(t0 - acceptance_start).count();
    double total = tests + acceptance;
    c.expect(total < kSuiteBudgetSeconds, "suite took " + std::to_string(total) + " s");
    if (c.ok) c.why << "unit tests " << tests << " s + acceptance " << acceptance << " s";
}

}  // namespace

int main() {
    auto start = Clock::now();
    std::pair<const char*, std::function<void(Check&)>> criteria[] = {
        {"metric oracle equivalence", metric_oracle},
        {"distance constants", distance_constants},
        {"accuracy@161 inclusive boundary", acc161_boundary},
        {"AUC endpoints and monotonicity", auc_endpoints},
        {"matching conservation", matching_conservation},
        {"fixture contract and round trip", fixture_contract},
        {"injected-error determinism", injected_error},
        {"partial-annotation gating", partial_gating},
        {"archiving and caching", archiving},
        {"baseline behavior", baseline},
        {"suite under five minutes offline", [&](Check& c) { suite_budget(c, start); }},
    };
    int failures = 0;
    int n = 0;
    for (auto& [name, run] : criteria) {
        Check c;
        try {
            run(c);
        } catch (const std::exception& e) {
            c.ok = false;
            c.why << "exception: " << e.what();
        }
        failures += c.ok ? 0 : 1;
        std::cout << (c.ok ? "PASS" : "FAIL") << "  " << ++n << ". " << name;
        if (auto why = c.why.str(); !why.empty()) std::cout << " (" << why << ")";
        std::cout << std::endl;
    }
    std::cout << (std::size(criteria) - failures) << "/" << std::size(criteria) << " criteria passed" << std::endl;
    return failures == 0 ? 0 : 1;
}
