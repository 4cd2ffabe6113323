#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "geoeval/corpus.hpp"
#include "geoeval/error.hpp"
#include "geoeval/gazetteer.hpp"
#include "geoeval/utf8.hpp"

namespace geoeval {

enum class GeoparserKind { builtin_gazpop, rest, replay };

inline std::string_view to_string(GeoparserKind k) {
    switch (k) {
        case GeoparserKind::builtin_gazpop: return "builtin_gazpop";
        case GeoparserKind::rest: return "rest";
        case GeoparserKind::replay: break;
    }
    return "replay";
}

inline std::optional<GeoparserKind> parse_geoparser_kind(std::string_view s) {
    for (auto k : {GeoparserKind::builtin_gazpop, GeoparserKind::rest, GeoparserKind::replay})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

/// Identity and access method of a geoparser, frozen into experiment records.
struct GeoparserRef {
    std::string id;
    std::string display_name;
    GeoparserKind kind = GeoparserKind::builtin_gazpop;
    std::optional<std::string> endpoint_url;
    std::string version;
    std::optional<std::int64_t> rate_limit;  // requests per hour
    std::optional<std::string> fixture_path;  // replay only

    friend bool operator==(const GeoparserRef&, const GeoparserRef&) = default;
};

namespace detail {

inline bool is_identifier(std::string_view s) {
    if (s.empty() || s.size() > 64) return false;
    for (char c : s)
        if (!((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.'))
            return false;
    return true;
}

}  // namespace detail

struct ParsedUrl {
    std::string scheme;
    std::string host;
    int port = 0;
    std::string path;

    std::string origin() const { return scheme + "://" + host + ":" + std::to_string(port); }
};

/// Accepts http(s)://host[:port][/path]; nullopt for anything else.
inline std::optional<ParsedUrl> parse_url(std::string_view url) {
    ParsedUrl out;
    auto sep = url.find("://");
    if (sep == std::string_view::npos) return std::nullopt;
    out.scheme = std::string(url.substr(0, sep));
    if (out.scheme != "http" && out.scheme != "https") return std::nullopt;
    auto rest = url.substr(sep + 3);
    auto slash = rest.find('/');
    auto authority = rest.substr(0, slash);
    out.path = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
    if (authority.empty() || authority.find_first_of(" @?#") != std::string_view::npos) return std::nullopt;
    auto colon = authority.rfind(':');
    if (colon != std::string_view::npos && authority.find(']') == std::string_view::npos) {
        auto port = detail::parse_int<int>(authority.substr(colon + 1));
        if (!port || *port <= 0 || *port > 65535) return std::nullopt;
        out.port = *port;
        authority = authority.substr(0, colon);
    } else {
        out.port = out.scheme == "https" ? 443 : 80;
    }
    if (authority.empty()) return std::nullopt;
    out.host = std::string(authority);
    return out;
}

/// Throws ValidationError when the registration record is inconsistent.
inline void validate_ref(const GeoparserRef& ref) {
    if (!detail::is_identifier(ref.id)) throw ValidationError("geoparser id must match [A-Za-z0-9._-]{1,64}: \"" + ref.id + "\"");
    if (ref.kind == GeoparserKind::rest) {
        if (!ref.endpoint_url) throw ValidationError("rest geoparser '" + ref.id + "' requires endpoint_url");
        if (!parse_url(*ref.endpoint_url)) throw ValidationError("invalid endpoint_url \"" + *ref.endpoint_url + "\"");
    }
    if (ref.rate_limit && *ref.rate_limit <= 0) throw ValidationError("rate_limit must be positive");
}

inline nlohmann::json to_json(const GeoparserRef& ref) {
    nlohmann::json j{{"id", ref.id}, {"display_name", ref.display_name}, {"kind", to_string(ref.kind)}, {"version", ref.version}};
    if (ref.endpoint_url) j["endpoint_url"] = *ref.endpoint_url;
    if (ref.rate_limit) j["rate_limit"] = *ref.rate_limit;
    if (ref.fixture_path) j["fixture_path"] = *ref.fixture_path;
    return j;
}

/// Reads a registration record {id, display_name, kind, endpoint_url?, version, rate_limit?}.
inline GeoparserRef geoparser_ref_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("geoparser record must be a JSON object");
    auto str = [&](const char* key, bool required) -> std::optional<std::string> {
        auto it = j.find(key);
        if (it == j.end() || it->is_null()) {
            if (required) throw ValidationError(std::string("geoparser record is missing \"") + key + "\"");
            return std::nullopt;
        }
        if (!it->is_string()) throw ValidationError(std::string("\"") + key + "\" must be a string");
        return it->get<std::string>();
    };
    GeoparserRef ref;
    ref.id = *str("id", true);
    ref.display_name = str("display_name", false).value_or(ref.id);
    auto kind = parse_geoparser_kind(*str("kind", true));
    if (!kind) throw ValidationError("unknown geoparser kind \"" + j["kind"].get<std::string>() + "\"");
    ref.kind = *kind;
    ref.endpoint_url = str("endpoint_url", false);
    ref.version = *str("version", true);
    ref.fixture_path = str("fixture_path", false);
    if (auto it = j.find("rate_limit"); it != j.end() && !it->is_null()) {
        if (!it->is_number_integer()) throw ValidationError("rate_limit must be an integer");
        ref.rate_limit = it->get<std::int64_t>();
    }
    validate_ref(ref);
    return ref;
}

/// Output of one geoparser on one entry. Every toponym carries a footprint.
struct GeoparseResult {
    std::string entry_id;
    std::vector<ToponymSpan> toponyms;
    std::string parser;
    std::chrono::microseconds elapsed{0};

    friend bool operator==(const GeoparseResult&, const GeoparseResult&) = default;
};

struct ParsedOutput {
    std::vector<ToponymSpan> toponyms;
    std::vector<std::string> warnings;
};

namespace detail {

inline double coordinate(const nlohmann::json& v, std::size_t index) {
    if (!v.is_number()) throw ContractError("toponym " + std::to_string(index) + ": footprint coordinates must be numeric");
    return v.get<double>();
}

}  // namespace detail

/// Parses geoparser output: {"toponyms":[{start,end,phrase,place:{footprint:[[lon,lat]],placename?,placetype?}}]}.
/// Only the first footprint pair is used; extra pairs produce a warning.
inline ParsedOutput parse_output_json(std::string_view bytes) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(bytes);
    } catch (const nlohmann::json::parse_error& e) {
        throw ContractError(std::string("geoparser output is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("toponyms")) throw ContractError("geoparser output has no \"toponyms\" root attribute");
    const auto& list = doc["toponyms"];
    if (!list.is_array()) throw ContractError("\"toponyms\" must be an array");

    ParsedOutput out;
    for (std::size_t i = 0; i < list.size(); ++i) {
        const auto& t = list[i];
        auto where = "toponym " + std::to_string(i);
        if (!t.is_object()) throw ContractError(where + " is not an object");
        auto index = [&](const char* key) -> std::size_t {
            auto it = t.find(key);
            if (it == t.end() || !it->is_number_integer() || it->get<std::int64_t>() < 0)
                throw ContractError(where + ": \"" + key + "\" must be a non-negative integer");
            return it->get<std::size_t>();
        };
        ToponymSpan span;
        span.start = index("start");
        span.end = index("end");
        if (span.end < span.start) throw ContractError(where + ": end precedes start");
        auto phrase = t.find("phrase");
        if (phrase == t.end() || !phrase->is_string()) throw ContractError(where + ": \"phrase\" must be a string");
        span.phrase = phrase->get<std::string>();
        where += " (\"" + span.phrase + "\")";

        auto place = t.find("place");
        if (place == t.end() || !place->is_object()) throw ContractError(where + " has no \"place\" object");
        auto fp = place->find("footprint");
        if (fp == place->end() || !fp->is_array() || fp->empty()) throw ContractError(where + " has no footprint");
        const nlohmann::json* pair = &(*fp);
        if ((*fp)[0].is_array()) {
            pair = &(*fp)[0];
            if (fp->size() > 1)
                out.warnings.push_back(where + ": footprint has " + std::to_string(fp->size()) + " pairs; using the first");
        }
        if (pair->size() != 2) throw ContractError(where + ": footprint pair must be [lon, lat]");
        GeoPoint p{detail::coordinate((*pair)[0], i), detail::coordinate((*pair)[1], i)};
        if (!p.valid()) throw ContractError(where + ": footprint out of range");
        span.footprint = p;
        if (auto v = place->find("placename"); v != place->end() && v->is_string()) span.place_name = v->get<std::string>();
        if (auto v = place->find("placetype"); v != place->end() && v->is_string()) span.place_type = v->get<std::string>();
        out.toponyms.push_back(std::move(span));
    }
    return out;
}

inline nlohmann::json output_json(const std::vector<ToponymSpan>& toponyms) {
    auto list = nlohmann::json::array();
    for (const auto& t : toponyms) {
        nlohmann::json place = nlohmann::json::object();
        if (t.footprint) place["footprint"] = nlohmann::json::array({nlohmann::json::array({t.footprint->lon, t.footprint->lat})});
        if (t.place_name) place["placename"] = *t.place_name;
        if (t.place_type) place["placetype"] = *t.place_type;
        list.push_back({{"start", t.start}, {"end", t.end}, {"phrase", t.phrase}, {"place", std::move(place)}});
    }
    return nlohmann::json{{"toponyms", std::move(list)}};
}

inline std::string serialize_output_json(const std::vector<ToponymSpan>& toponyms) { return output_json(toponyms).dump(); }

/// Common interface of every geoparser. Implementations must be safe for concurrent calls.
class Geoparser {
public:
    explicit Geoparser(GeoparserRef ref) : ref_(std::move(ref)) {}
    virtual ~Geoparser() = default;
    Geoparser(const Geoparser&) = delete;
    Geoparser& operator=(const Geoparser&) = delete;

    const GeoparserRef& ref() const noexcept { return ref_; }
    /// Number of entries this geoparser was asked to process.
    std::uint64_t invocations() const noexcept { return invocations_.load(); }

    GeoparseResult geoparse(const CorpusEntry& entry) {
        ++invocations_;
        auto t0 = std::chrono::steady_clock::now();
        GeoparseResult result;
        result.entry_id = entry.entry_id;
        result.parser = ref_.id;
        result.toponyms = recognize_and_resolve(entry);
        result.elapsed = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - t0);
        auto text_length = utf8::length(entry.text);
        for (const auto& t : result.toponyms) {
            if (!t.footprint) throw ContractError("geoparser '" + ref_.id + "' returned toponym \"" + t.phrase + "\" without footprint");
            if (t.start > t.end || t.end >= text_length)
                throw ContractError("geoparser '" + ref_.id + "' returned span " + detail::describe_span(t) +
                                    " outside entry '" + entry.entry_id + "'");
        }
        return result;
    }

protected:
    virtual std::vector<ToponymSpan> recognize_and_resolve(const CorpusEntry& entry) = 0;

private:
    GeoparserRef ref_;
    std::atomic<std::uint64_t> invocations_{0};
};

namespace detail {

struct Token {
    std::size_t start = 0;  // scalar index
    std::size_t end = 0;    // inclusive
};

inline bool is_separator(char32_t c) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v' || c == 0xA0 || c == 0x3000) return true;
    if (c < 0x80) return !((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9'));
    return (c >= 0x2000 && c <= 0x206F);  // general punctuation and typographic spaces
}

inline std::vector<Token> tokenize(std::u32string_view text) {
    std::vector<Token> tokens;
    for (std::size_t i = 0; i < text.size();) {
        if (is_separator(text[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < text.size() && !is_separator(text[j + 1])) ++j;
        tokens.push_back({i, j});
        i = j + 1;
    }
    return tokens;
}

}  // namespace detail

/// Longest-match dictionary chunking over the gazetteer, resolved by highest population.
inline std::vector<ToponymSpan> gazpop_spans(const Gazetteer& g, std::string_view text, std::size_t max_window = 5) {
    auto scalars = utf8::decode(text);
    auto tokens = detail::tokenize(scalars);
    std::vector<ToponymSpan> spans;
    for (std::size_t i = 0; i < tokens.size();) {
        bool matched = false;
        for (std::size_t w = std::min(max_window, tokens.size() - i); w >= 1; --w) {
            auto start = tokens[i].start;
            auto end = tokens[i + w - 1].end;
            auto surface = utf8::encode(std::u32string_view(scalars).substr(start, end - start + 1));
            auto candidates = g.lookup(surface);
            if (candidates.empty()) continue;
            const auto& chosen = resolve_highest_population(candidates);
            ToponymSpan span;
            span.start = start;
            span.end = end;
            span.phrase = std::move(surface);
            span.footprint = chosen.location;
            span.place_name = chosen.canonical_name;
            if (!chosen.feature_class.empty()) span.place_type = chosen.feature_class;
            spans.push_back(std::move(span));
            i += w;
            matched = true;
            break;
        }
        if (!matched) ++i;
    }
    return spans;
}

/// The built-in "gazetteer + highest population" baseline.
class GazpopGeoparser final : public Geoparser {
public:
    GazpopGeoparser(GeoparserRef ref, std::shared_ptr<const Gazetteer> gazetteer)
        : Geoparser(std::move(ref)), gazetteer_(std::move(gazetteer)) {}

protected:
    std::vector<ToponymSpan> recognize_and_resolve(const CorpusEntry& entry) override {
        return gazpop_spans(*gazetteer_, entry.text);
    }

private:
    std::shared_ptr<const Gazetteer> gazetteer_;
};

inline GeoparseResult geoparse_gazpop(const std::shared_ptr<const Gazetteer>& g, const CorpusEntry& entry) {
    GazpopGeoparser parser(GeoparserRef{"gazpop", "Gazetteer + Population", GeoparserKind::builtin_gazpop, {}, "1", {}, {}}, g);
    return parser.geoparse(entry);
}

using ReplayFixture = std::map<std::string, std::vector<ToponymSpan>, std::less<>>;

/// Fixture file: {"<entry_id>": <geoparser output document>, ...}.
inline ReplayFixture parse_replay_fixture(std::string_view bytes) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(bytes);
    } catch (const nlohmann::json::parse_error& e) {
        throw ContractError(std::string("replay fixture is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ContractError("replay fixture must map entry ids to geoparser outputs");
    ReplayFixture fixture;
    for (const auto& [entry_id, output] : doc.items())
        fixture.emplace(entry_id, parse_output_json(output.dump()).toponyms);
    return fixture;
}

inline std::string serialize_replay_fixture(const ReplayFixture& fixture) {
    nlohmann::json doc = nlohmann::json::object();
    for (const auto& [entry_id, spans] : fixture) doc[entry_id] = output_json(spans);
    return doc.dump(2);
}

/// Deterministic test double that answers from a fixture.
class ReplayGeoparser final : public Geoparser {
public:
    ReplayGeoparser(GeoparserRef ref, ReplayFixture fixture) : Geoparser(std::move(ref)), fixture_(std::move(fixture)) {}

    /// Also checks every fixture span against the matching entry text of `corpus`.
    ReplayGeoparser(GeoparserRef ref, ReplayFixture fixture, const Corpus& corpus)
        : ReplayGeoparser(std::move(ref), std::move(fixture)) {
        for (const auto& entry : corpus.entries) {
            auto it = fixture_.find(entry.entry_id);
            if (it == fixture_.end()) continue;
            check(entry, it->second);
        }
    }

protected:
    std::vector<ToponymSpan> recognize_and_resolve(const CorpusEntry& entry) override {
        auto it = fixture_.find(entry.entry_id);
        if (it == fixture_.end()) return {};
        check(entry, it->second);
        return it->second;
    }

private:
    static void check(const CorpusEntry& entry, const std::vector<ToponymSpan>& spans) {
        auto text = utf8::decode(entry.text);
        for (const auto& s : spans) validate_span(text, s, entry.entry_id);
    }

    ReplayFixture fixture_;
};

inline GeoparseResult geoparse_replay(const ReplayFixture& fixture, const CorpusEntry& entry) {
    ReplayGeoparser parser(GeoparserRef{"replay", "Replay", GeoparserKind::replay, {}, "1", {}, {}}, fixture);
    return parser.geoparse(entry);
}

}  // namespace geoeval
