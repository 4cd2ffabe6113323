#pragma once

#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "geoeval/cache.hpp"
#include "geoeval/corpus.hpp"
#include "geoeval/error.hpp"
#include "geoeval/experiment.hpp"
#include "geoeval/line_corpus.hpp"
#include "geoeval/registry.hpp"
#include "geoeval/server.hpp"
#include "geoeval/store.hpp"

namespace geoeval::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitTransport = 2;
inline constexpr int kExitUsage = 64;

struct Streams {
    std::ostream& out = std::cout;
    std::ostream& err = std::cerr;
};

/// Reads a column map: {"text": "tweet_text", "lon": 4, ...}; strings name a header, numbers a position.
inline ColumnMap parse_column_map(std::string_view bytes) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("column map is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError("column map must be a JSON object");
    ColumnMap map;
    for (const auto& [field, v] : j.items()) {
        if (v.is_string())
            map[field] = ColumnRef::named(v.get<std::string>());
        else if (v.is_number_unsigned())
            map[field] = ColumnRef::at(v.get<std::size_t>());
        else
            throw ValidationError("column map field '" + field + "' must be a header name or a column index");
    }
    return map;
}

/// Loads a corpus file; the id falls back to the file stem.
inline std::shared_ptr<const Corpus> load_corpus_file(const std::string& path, bool fully_annotated) {
    auto corpus = parse_unified_corpus(read_file(path), fully_annotated);
    if (corpus.id.empty()) corpus.id = std::filesystem::path(path).stem().string();
    if (corpus.name.empty()) corpus.name = corpus.id;
    return std::make_shared<const Corpus>(std::move(corpus));
}

/// Resolves a --geoparser argument: "gazpop", an http(s) URL, "replay:<fixture.json>", or an id
/// registered in the store.
inline GeoparserRef resolve_geoparser_arg(const std::string& arg, const std::optional<BuiltinGazetteer>& gazetteer, CacheStore& store) {
    if (arg == "gazpop") {
        if (!gazetteer) throw ValidationError("geoparser 'gazpop' needs --gazetteer");
        return gazpop_ref(*gazetteer);
    }
    if (arg.starts_with("replay:")) {
        auto path = arg.substr(7);
        auto stem = std::filesystem::path(path).stem().string();
        GeoparserRef ref{"replay-" + stem, "Replay " + stem, GeoparserKind::replay, std::nullopt,
                         "fixture." + sha256_hex(read_file(path)).substr(0, 12), std::nullopt, path};
        if (!detail::is_identifier(ref.id)) ref.id = "replay-" + sha256_hex(path).substr(0, 12);
        return ref;
    }
    if (arg.starts_with("http://") || arg.starts_with("https://")) {
        if (!parse_url(arg)) throw ValidationError("not a valid geoparser URL: \"" + arg + "\"");
        return GeoparserRef{"rest-" + sha256_hex(arg).substr(0, 12), arg, GeoparserKind::rest, arg, "unversioned", std::nullopt, std::nullopt};
    }
    if (auto stored = store.geoparser_record(arg)) return geoparser_ref_from_json(nlohmann::json::parse(*stored));
    throw ValidationError("unknown geoparser \"" + arg + "\"");
}

inline std::set<Metric> parse_metric_list(const std::vector<std::string>& items) {
    std::set<Metric> out;
    for (const auto& item : items) {
        std::string_view rest = item;
        while (!rest.empty()) {
            auto comma = rest.find(',');
            auto name = detail::trim(rest.substr(0, comma));
            rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
            if (name.empty()) continue;
            if (name == "all") {
                out.insert(std::begin(kAllMetrics), std::end(kAllMetrics));
                continue;
            }
            auto m = parse_metric(name);
            if (!m) throw ValidationError("unknown metric \"" + std::string(name) + "\"");
            out.insert(*m);
        }
    }
    if (out.empty()) throw ValidationError("select at least one metric");
    return out;
}

namespace detail {

inline int cmd_validate(const std::string& path, bool partial, Streams io) {
    auto corpus = parse_unified_corpus(read_file(path), !partial);
    auto stats = corpus_stats(corpus);
    std::size_t toponyms = 0;
    for (const auto& e : corpus.entries) toponyms += e.annotations.size();
    nlohmann::json out{{"valid", true},
                       {"entries", stats.entry_count},
                       {"toponyms", toponyms},
                       {"fully_annotated", corpus.fully_annotated},
                       {"mean_words_per_entry", stats.mean_words_per_entry},
                       {"mean_toponyms_per_entry", stats.mean_toponyms_per_entry}};
    io.out << out.dump(2) << '\n';
    return kExitOk;
}

inline int cmd_convert(const std::string& format_name, const std::string& map_path, const std::string& in, const std::string& out_path,
                       Streams io) {
    auto format = parse_line_format(format_name);
    if (!format) throw ValidationError("unknown format \"" + format_name + "\"; use tsv_multi_line or csv_one_per_line");
    auto result = convert_line_corpus(read_file(in), *format, parse_column_map(read_file(map_path)));
    write_file(out_path, serialize_corpus(result.corpus));
    nlohmann::json report{{"rows_read", result.report.rows_read},
                          {"entries", result.corpus.entries.size()},
                          {"warnings", result.report.warnings},
                          {"skipped", nlohmann::json::array()}};
    for (const auto& s : result.report.skipped) report["skipped"].push_back({{"line", s.line}, {"reason", s.reason}});
    io.out << report.dump(2) << '\n';
    return kExitOk;
}

struct RunArgs {
    std::vector<std::string> corpora;
    bool partial = false;
    std::vector<std::string> geoparsers;
    std::vector<std::string> metrics;
    std::string out;
    std::string store = "geoeval.db";
    std::optional<std::string> gazetteer;
    std::size_t parallelism = 4;
};

inline int cmd_run(const RunArgs& args, Streams io) {
    CacheStore store(args.store);
    std::optional<BuiltinGazetteer> gazetteer;
    if (args.gazetteer) gazetteer = load_builtin_gazetteer(*args.gazetteer);

    ExperimentPlan plan;
    plan.parallelism = std::max<std::size_t>(args.parallelism, 1);
    plan.metrics = parse_metric_list(args.metrics);
    for (const auto& path : args.corpora) plan.corpora.push_back(load_corpus_file(path, !args.partial));
    for (const auto& arg : args.geoparsers)
        plan.geoparsers.push_back(make_geoparser(resolve_geoparser_arg(arg, gazetteer, store), gazetteer ? &*gazetteer : nullptr));

    auto record = run_experiment(store, plan);
    write_file(args.out, to_json(record).dump(2) + "\n");
    io.out << record.experiment_id << '\n';
    if (record.status == ExperimentStatus::failed) {
        io.err << "experiment " << record.experiment_id << " failed: " << record.failure_detail.value_or("") << '\n';
        return kExitTransport;
    }
    return kExitOk;
}

inline int cmd_search(const std::string& id, const std::string& store_path, Streams io) {
    if (!is_valid_experiment_id(id)) {
        io.err << "experiment ids are 16 characters from A-Z and 0-9\n";
        return kExitValidation;
    }
    CacheStore store(store_path);
    auto record = find_experiment(store, id);
    if (!record) {
        io.err << "no experiment with id " << id << '\n';
        return kExitValidation;
    }
    io.out << to_json(*record).dump(2) << '\n';
    return kExitOk;
}

inline int cmd_serve(const std::string& config_path, Streams io) {
    auto cfg = load_server_config(config_path);
    ApiServer server(cfg);
    auto [host, port] = split_listen_address(cfg.listen_address);
    int bound = server.bind(host, port);
    if (bound < 0) {
        io.err << "cannot listen on " << cfg.listen_address << '\n';
        return kExitTransport;
    }
    io.out << "listening on " << host << ':' << bound << std::endl;
    return server.listen_after_bind() ? kExitOk : kExitTransport;
}

}  // namespace detail

/// Entry point of the geoeval tool. Exit codes: 0 ok, 1 validation or not found,
/// 2 transport or failed run, 64 usage.
inline int dispatch(int argc, const char* const* argv, Streams io = {}) {
    CLI::App app{"Geoparser benchmarking: validate and convert corpora, run and search experiments, serve the API."};
    app.name("geoeval");
    app.require_subcommand(1);

    std::string validate_path;
    bool validate_partial = false;
    auto* validate = app.add_subcommand("validate", "Check a corpus in the unified XML format");
    validate->add_option("corpus", validate_path, "Corpus XML file")->required();
    validate->add_flag("--partial", validate_partial, "Treat the corpus as not fully annotated");

    std::string format, map_path, in_path, out_path;
    auto* convert = app.add_subcommand("convert", "Convert a line-oriented corpus to unified XML");
    convert->add_option("--format", format, "tsv_multi_line or csv_one_per_line")->required();
    convert->add_option("--map", map_path, "JSON column map")->required();
    convert->add_option("in", in_path, "Input file")->required();
    convert->add_option("out", out_path, "Output XML file")->required();

    detail::RunArgs run_args;
    auto* run = app.add_subcommand("run", "Run an experiment and write its report");
    run->add_option("--corpus", run_args.corpora, "Corpus XML file (repeatable)")->required();
    run->add_flag("--partial", run_args.partial, "Corpora are not fully annotated");
    run->add_option("--geoparser", run_args.geoparsers, "gazpop, an endpoint URL, replay:<fixture.json> or a registered id")->required();
    run->add_option("--metrics", run_args.metrics, "Comma-separated metrics or 'all'")->required();
    run->add_option("--out", run_args.out, "Report JSON file")->required();
    run->add_option("--store", run_args.store, "Store file")->capture_default_str();
    run->add_option("--gazetteer", run_args.gazetteer, "Gazetteer TSV for gazpop");
    run->add_option("--parallelism", run_args.parallelism, "Worker threads")->capture_default_str();

    std::string search_id, search_store = "geoeval.db";
    auto* search = app.add_subcommand("search", "Print an archived experiment");
    search->add_option("id", search_id, "Experiment id")->required();
    search->add_option("--store", search_store, "Store file")->capture_default_str();

    std::string config_path = "geoeval.json";
    auto* serve = app.add_subcommand("serve", "Start the HTTP server");
    serve->add_option("--config", config_path, "Config JSON file (GEOEVAL_CONFIG overrides)")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        io.out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        io.out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        io.err << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (*validate) return detail::cmd_validate(validate_path, validate_partial, io);
        if (*convert) return detail::cmd_convert(format, map_path, in_path, out_path, io);
        if (*run) return detail::cmd_run(run_args, io);
        if (*search) return detail::cmd_search(search_id, search_store, io);
        if (*serve) return detail::cmd_serve(config_path, io);
    } catch (const ParseError& e) {
        io.err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const TransportError& e) {
        io.err << "error: " << e.what() << '\n';
        return kExitTransport;
    } catch (const RunFailure& e) {
        io.err << "error: " << e.what() << '\n';
        return kExitTransport;
    } catch (const StoreError& e) {
        io.err << "error: " << e.what() << '\n';
        return kExitTransport;
    } catch (const Error& e) {
        io.err << "error: " << e.what() << '\n';
        return kExitValidation;
    }
    io.err << app.help();
    return kExitUsage;
}

}  // namespace geoeval::cli
