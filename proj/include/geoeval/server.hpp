#pragma once

#include <cstdlib>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "geoeval/cache.hpp"
#include "geoeval/corpus.hpp"
#include "geoeval/error.hpp"
#include "geoeval/experiment.hpp"
#include "geoeval/geoparse.hpp"
#include "geoeval/metrics.hpp"
#include "geoeval/registry.hpp"
#include "geoeval/store.hpp"

namespace geoeval {

inline constexpr const char* kConfigEnvVar = "GEOEVAL_CONFIG";

struct ServerConfig {
    std::string listen_address = "127.0.0.1:8080";
    std::string store_path = "geoeval.db";
    std::optional<std::string> gazetteer_path;
    std::size_t default_parallelism = 4;
    std::optional<std::string> static_dir;
};

/// Reads the JSON config. GEOEVAL_CONFIG, when set, replaces `path`.
inline ServerConfig load_server_config(std::string path) {
    if (const char* env = std::getenv(kConfigEnvVar); env && *env) path = env;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("config \"" + path + "\" is not valid JSON: " + e.what());
    }
    ServerConfig cfg;
    try {
        if (j.contains("listen_address")) cfg.listen_address = j["listen_address"].get<std::string>();
        if (j.contains("store_path")) cfg.store_path = j["store_path"].get<std::string>();
        if (j.contains("gazetteer_path") && !j["gazetteer_path"].is_null()) cfg.gazetteer_path = j["gazetteer_path"].get<std::string>();
        if (j.contains("default_parallelism")) cfg.default_parallelism = j["default_parallelism"].get<std::size_t>();
        if (j.contains("static_dir") && !j["static_dir"].is_null()) cfg.static_dir = j["static_dir"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("config \"" + path + "\": " + e.what());
    }
    if (cfg.default_parallelism == 0) throw ValidationError("default_parallelism must be positive");
    return cfg;
}

/// Splits "host:port".
inline std::pair<std::string, int> split_listen_address(const std::string& address) {
    auto colon = address.rfind(':');
    auto port = colon == std::string::npos ? std::nullopt : detail::parse_int<int>(std::string_view(address).substr(colon + 1));
    if (!port || *port < 0 || *port > 65535) throw ValidationError("listen_address must be host:port, got \"" + address + "\"");
    return {address.substr(0, colon), *port};
}

/// JSON API over the store plus static hosting of the web client.
///
///   POST /api/corpora            upload unified XML (raw body or multipart field "corpus")
///   GET  /api/corpora
///   POST /api/geoparsers         register {id, display_name, kind, endpoint_url?, version, rate_limit?}
///   GET  /api/geoparsers
///   POST /api/experiments        {corpora, geoparsers, metrics} -> 202 {experiment_id}
///   GET  /api/experiments/{id}
///   GET  /api/experiments        ?cursor=&limit=
///   POST /api/parse/gazpop       plain text -> geoparser output JSON
class ApiServer {
public:
    ApiServer(std::shared_ptr<CacheStore> store, std::optional<BuiltinGazetteer> gazetteer, std::size_t parallelism = 4,
              std::optional<std::string> static_dir = std::nullopt)
        : store_(std::move(store)), gazetteer_(std::move(gazetteer)), parallelism_(std::max<std::size_t>(parallelism, 1)) {
        if (static_dir && std::filesystem::is_directory(*static_dir)) server_.set_mount_point("/", *static_dir);
        install_routes();
    }

    explicit ApiServer(const ServerConfig& cfg)
        : ApiServer(std::make_shared<CacheStore>(cfg.store_path),
                    cfg.gazetteer_path ? std::optional(load_builtin_gazetteer(*cfg.gazetteer_path)) : std::nullopt,
                    cfg.default_parallelism, cfg.static_dir) {}

    ~ApiServer() {
        stop();
        std::lock_guard lock(jobs_mutex_);
        jobs_.clear();
    }

    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    /// Binds; port 0 picks a free port. Returns the bound port, or -1.
    int bind(const std::string& host, int port) {
        if (port == 0) return server_.bind_to_any_port(host);
        return server_.bind_to_port(host, port) ? port : -1;
    }
    bool listen_after_bind() { return server_.listen_after_bind(); }
    bool listen(const std::string& address) {
        auto [host, port] = split_listen_address(address);
        if (bind(host, port) < 0) return false;
        return listen_after_bind();
    }
    void stop() { server_.stop(); }
    void wait_until_ready() { server_.wait_until_ready(); }

    /// Blocks until every background experiment has finished.
    void wait_for_experiments() {
        std::vector<std::jthread> jobs;
        {
            std::lock_guard lock(jobs_mutex_);
            jobs.swap(jobs_);
        }
        jobs.clear();
    }

    CacheStore& store() { return *store_; }

    /// Options for REST geoparsers instantiated by later experiments.
    void set_rest_options(RestOptions options) {
        std::lock_guard lock(jobs_mutex_);
        rest_options_ = std::move(options);
    }

private:
    static void send_error(httplib::Response& res, int status, std::string code, std::string message,
                           nlohmann::json detail = nullptr) {
        nlohmann::json body{{"code", std::move(code)}, {"message", std::move(message)}};
        if (!detail.is_null()) body["detail"] = std::move(detail);
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    void install_routes() {
        server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
            send_error(res, res.status, res.status == 404 ? "not_found" : "http_error", httplib::status_message(res.status));
            return httplib::Server::HandlerResponse::Handled;
        });
        server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                send_error(res, 500, "internal_error", e.what());
            } catch (...) {
                send_error(res, 500, "internal_error", "unknown error");
            }
        });

        server_.Post("/api/corpora", [this](const httplib::Request& req, httplib::Response& res) { upload_corpus(req, res); });
        server_.Get("/api/corpora", [this](const httplib::Request&, httplib::Response& res) { list_corpora(res); });
        server_.Post("/api/geoparsers", [this](const httplib::Request& req, httplib::Response& res) { register_geoparser(req, res); });
        server_.Get("/api/geoparsers", [this](const httplib::Request&, httplib::Response& res) { list_geoparsers(res); });
        server_.Post("/api/experiments", [this](const httplib::Request& req, httplib::Response& res) { run_experiment(req, res); });
        server_.Get("/api/experiments", [this](const httplib::Request& req, httplib::Response& res) { list_experiments(req, res); });
        server_.Get(R"(/api/experiments/([^/]+))",
                    [this](const httplib::Request& req, httplib::Response& res) { get_experiment(req, res); });
        server_.Post("/api/parse/gazpop", [this](const httplib::Request& req, httplib::Response& res) { builtin_parse(req, res); });
    }

    // POST /api/corpora
    void upload_corpus(const httplib::Request& req, httplib::Response& res) {
        std::string xml = req.body;
        auto param = [&](const char* key) -> std::optional<std::string> {
            if (req.has_param(key)) return req.get_param_value(key);
            if (req.is_multipart_form_data() && req.has_file(key)) return req.get_file_value(key).content;
            return std::nullopt;
        };
        if (req.is_multipart_form_data()) xml = req.has_file("corpus") ? req.get_file_value("corpus").content : std::string{};
        if (detail::trim(xml).empty()) return send_error(res, 422, "empty_corpus", "request body holds no corpus XML");

        bool fully_annotated = true;
        if (auto v = param("fully_annotated")) {
            if (*v != "true" && *v != "false") return send_error(res, 422, "invalid_parameter", "fully_annotated must be true or false");
            fully_annotated = *v == "true";
        }
        Corpus corpus;
        try {
            corpus = parse_unified_corpus(xml, fully_annotated);
            if (req.has_param("fully_annotated") || (req.is_multipart_form_data() && req.has_file("fully_annotated")))
                corpus.fully_annotated = fully_annotated;
            if (auto v = param("id")) corpus.id = *v;
            if (auto v = param("name")) corpus.name = *v;
            if (auto v = param("genre")) {
                auto g = parse_genre(*v);
                if (!g) throw ValidationError("unknown genre \"" + *v + "\"");
                corpus.genre = *g;
            }
            if (corpus.id.empty()) corpus.id = "corpus-" + corpus_content_hash(corpus).substr(0, 12);
            if (!detail::is_identifier(corpus.id)) throw ValidationError("corpus id must match [A-Za-z0-9._-]{1,64}");
            if (corpus.name.empty()) corpus.name = corpus.id;
        } catch (const ParseError& e) {
            return send_error(res, 422, "malformed_xml", e.what(), {{"line", e.line()}, {"column", e.column()}});
        } catch (const ValidationError& e) {
            return send_error(res, 422, "invalid_corpus", e.what());
        }

        auto stats = corpus_stats(corpus);
        StoredCorpus meta{corpus.id, corpus.name, std::string(to_string(corpus.genre)), corpus.fully_annotated,
                          static_cast<std::int64_t>(stats.entry_count)};
        if (!store_->insert_corpus(meta, serialize_corpus(corpus)))
            return send_error(res, 409, "duplicate_corpus", "corpus '" + corpus.id + "' already exists");
        send_json(res, 201, {{"id", corpus.id}, {"entries", stats.entry_count}, {"fully_annotated", corpus.fully_annotated},
                             {"mean_words_per_entry", stats.mean_words_per_entry},
                             {"mean_toponyms_per_entry", stats.mean_toponyms_per_entry}});
    }

    void list_corpora(httplib::Response& res) {
        auto list = nlohmann::json::array();
        for (const auto& c : store_->list_corpora())
            list.push_back({{"id", c.id}, {"name", c.name}, {"genre", c.genre}, {"fully_annotated", c.fully_annotated},
                            {"entries", c.entry_count}});
        send_json(res, 200, {{"corpora", std::move(list)}});
    }

    // POST /api/geoparsers
    void register_geoparser(const httplib::Request& req, httplib::Response& res) {
        GeoparserRef ref;
        try {
            ref = geoparser_ref_from_json(nlohmann::json::parse(req.body));
        } catch (const nlohmann::json::exception& e) {
            return send_error(res, 422, "invalid_geoparser", std::string("geoparser record is not valid JSON: ") + e.what());
        } catch (const ValidationError& e) {
            return send_error(res, 422, "invalid_geoparser", e.what());
        }
        if (ref.kind == GeoparserKind::builtin_gazpop)
            return send_error(res, 422, "invalid_geoparser", "built-in geoparsers cannot be registered");
        if (ref.kind == GeoparserKind::replay && ref.fixture_path) {
            try {
                parse_replay_fixture(read_file(*ref.fixture_path));
            } catch (const Error& e) {
                return send_error(res, 422, "invalid_geoparser", e.what());
            }
        }
        if (builtin_ref() && builtin_ref()->id == ref.id)
            return send_error(res, 409, "duplicate_geoparser", "geoparser '" + ref.id + "' already exists");
        if (!store_->insert_geoparser(ref.id, to_json(ref).dump()))
            return send_error(res, 409, "duplicate_geoparser", "geoparser '" + ref.id + "' already exists");
        send_json(res, 201, {{"id", ref.id}});
    }

    void list_geoparsers(httplib::Response& res) {
        auto list = nlohmann::json::array();
        if (auto b = builtin_ref()) list.push_back(to_json(*b));
        for (const auto& r : store_->list_geoparsers()) list.push_back(nlohmann::json::parse(r));
        send_json(res, 200, {{"geoparsers", std::move(list)}});
    }

    // POST /api/experiments
    void run_experiment(const httplib::Request& req, httplib::Response& res) {
        nlohmann::json body;
        try {
            body = nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::exception& e) {
            return send_error(res, 422, "invalid_request", std::string("request is not valid JSON: ") + e.what());
        }
        auto ids = [&](const char* key) -> std::optional<std::vector<std::string>> {
            if (!body.is_object() || !body.contains(key) || !body[key].is_array()) return std::nullopt;
            std::vector<std::string> out;
            for (const auto& v : body[key]) {
                if (!v.is_string()) return std::nullopt;
                out.push_back(v.get<std::string>());
            }
            return out;
        };
        auto corpus_ids = ids("corpora");
        auto parser_ids = ids("geoparsers");
        std::optional<std::vector<std::string>> metric_names =
            body.is_object() && body.contains("metrics") && body["metrics"] == "all" ? std::optional(std::vector<std::string>{"all"}) : ids("metrics");
        if (!corpus_ids || !parser_ids || !metric_names)
            return send_error(res, 422, "invalid_request", "corpora, geoparsers and metrics must be arrays of strings");
        if (corpus_ids->empty() || parser_ids->empty() || metric_names->empty())
            return send_error(res, 422, "empty_selection", "select at least one corpus, geoparser and metric");

        ExperimentPlan plan;
        plan.parallelism = parallelism_;
        for (const auto& name : *metric_names) {
            if (name == "all") {
                plan.metrics.insert(std::begin(kAllMetrics), std::end(kAllMetrics));
                continue;
            }
            auto m = parse_metric(name);
            if (!m) return send_error(res, 422, "unknown_metric", "unknown metric \"" + name + "\"");
            plan.metrics.insert(*m);
        }
        try {
            for (const auto& id : *corpus_ids) {
                auto xml = store_->corpus_xml(id);
                if (!xml) return send_error(res, 404, "unknown_corpus", "no corpus with id '" + id + "'");
                plan.corpora.push_back(std::make_shared<const Corpus>(parse_unified_corpus(*xml)));
            }
            for (const auto& id : *parser_ids) {
                auto ref = find_geoparser(id);
                if (!ref) return send_error(res, 404, "unknown_geoparser", "no geoparser with id '" + id + "'");
                RestOptions rest;
                {
                    std::lock_guard lock(jobs_mutex_);
                    rest = rest_options_;
                }
                plan.geoparsers.push_back(make_geoparser(*ref, gazetteer_ ? &*gazetteer_ : nullptr, std::move(rest)));
            }
            auto record = begin_experiment(*store_, plan);
            auto id = record.experiment_id;
            {
                std::lock_guard lock(jobs_mutex_);
                jobs_.emplace_back([this, plan = std::move(plan), record = std::move(record)]() mutable {
                    auto id = record.experiment_id;
                    try {
                        execute_experiment(*store_, std::move(record), plan);
                    } catch (const std::exception& e) {
                        mark_failed(id, e.what());
                    }
                });
            }
            send_json(res, 202, {{"experiment_id", id}, {"status", "running"}});
        } catch (const ValidationError& e) {
            send_error(res, 422, "invalid_request", e.what());
        } catch (const Error& e) {
            send_error(res, 422, "invalid_request", e.what());
        }
    }

    void mark_failed(const std::string& id, const std::string& why) {
        try {
            auto stored = store_->experiment(id);
            if (!stored) return;
            auto record = experiment_record_from_json(nlohmann::json::parse(stored->record_json));
            record.status = ExperimentStatus::failed;
            record.failure_detail = why;
            store_->update_experiment(id, "failed", to_json(record).dump());
        } catch (...) {
        }
    }

    // GET /api/experiments/{id}
    void get_experiment(const httplib::Request& req, httplib::Response& res) {
        std::string id = req.matches[1];
        try {
            auto record = find_experiment(*store_, id);
            if (!record) return send_error(res, 404, "not_found", "no experiment with id " + id);
            send_json(res, 200, to_json(*record));
        } catch (const ValidationError& e) {
            send_error(res, 422, "invalid_id", e.what());
        }
    }

    void list_experiments(const httplib::Request& req, httplib::Response& res) {
        std::optional<std::string> cursor;
        if (req.has_param("cursor")) cursor = req.get_param_value("cursor");
        std::size_t limit = 20;
        if (req.has_param("limit")) {
            auto v = detail::parse_int<std::size_t>(req.get_param_value("limit"));
            if (!v || *v == 0 || *v > 500) return send_error(res, 422, "invalid_parameter", "limit must be 1..500");
            limit = *v;
        }
        try {
            auto page = geoeval::list_experiments(*store_, cursor, limit);
            auto items = nlohmann::json::array();
            for (const auto& s : page.items) items.push_back(to_json(s));
            nlohmann::json body{{"experiments", std::move(items)}};
            if (page.next_cursor) body["next_cursor"] = *page.next_cursor;
            send_json(res, 200, body);
        } catch (const ValidationError& e) {
            send_error(res, 422, "invalid_parameter", e.what());
        }
    }

    // POST /api/parse/gazpop
    void builtin_parse(const httplib::Request& req, httplib::Response& res) {
        if (req.body.empty()) return send_error(res, 422, "empty_text", "request body holds no text");
        if (!gazetteer_) return send_error(res, 503, "no_gazetteer", "the server was started without a gazetteer");
        try {
            auto spans = gazpop_spans(*gazetteer_->gazetteer, req.body);
            res.status = 200;
            res.set_content(serialize_output_json(spans), "application/json");
        } catch (const ValidationError& e) {
            send_error(res, 422, "invalid_text", e.what());
        }
    }

    std::optional<GeoparserRef> builtin_ref() const {
        if (!gazetteer_) return std::nullopt;
        return gazpop_ref(*gazetteer_);
    }

    std::optional<GeoparserRef> find_geoparser(const std::string& id) {
        if (auto b = builtin_ref(); b && b->id == id) return b;
        auto stored = store_->geoparser_record(id);
        if (!stored) return std::nullopt;
        return geoparser_ref_from_json(nlohmann::json::parse(*stored));
    }

    std::shared_ptr<CacheStore> store_;
    std::optional<BuiltinGazetteer> gazetteer_;
    std::size_t parallelism_;
    RestOptions rest_options_;
    httplib::Server server_;
    std::mutex jobs_mutex_;
    std::vector<std::jthread> jobs_;
};

}  // namespace geoeval
