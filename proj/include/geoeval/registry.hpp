#pragma once

#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "geoeval/cache.hpp"
#include "geoeval/error.hpp"
#include "geoeval/gazetteer.hpp"
#include "geoeval/geoparse.hpp"
#include "geoeval/rest_geoparser.hpp"

namespace geoeval {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read \"" + path + "\"");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, std::string_view data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write \"" + path + "\"");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error("cannot write \"" + path + "\"");
}

/// A loaded gazetteer with a version string tied to its content.
struct BuiltinGazetteer {
    std::shared_ptr<const Gazetteer> gazetteer;
    GazetteerLoadReport report;
    std::string content_hash;
};

inline BuiltinGazetteer load_builtin_gazetteer(const std::string& path) {
    auto bytes = read_file(path);
    auto loaded = load_gazetteer(bytes);
    return BuiltinGazetteer{std::make_shared<const Gazetteer>(std::move(loaded.gazetteer)), std::move(loaded.report),
                            sha256_hex(bytes)};
}

/// Registration record of the built-in baseline. The version embeds the gazetteer hash so a
/// gazetteer change invalidates cached output.
inline GeoparserRef gazpop_ref(const BuiltinGazetteer& g) {
    return GeoparserRef{"gazpop", "Gazetteer + Population", GeoparserKind::builtin_gazpop, std::nullopt,
                        "1.0+gaz." + g.content_hash.substr(0, 12), std::nullopt, std::nullopt};
}

/// Instantiates the geoparser a registration record describes.
inline std::shared_ptr<Geoparser> make_geoparser(const GeoparserRef& ref, const BuiltinGazetteer* gazetteer, RestOptions rest = {}) {
    validate_ref(ref);
    switch (ref.kind) {
        case GeoparserKind::builtin_gazpop:
            if (!gazetteer || !gazetteer->gazetteer) throw ValidationError("geoparser '" + ref.id + "' needs a gazetteer");
            return std::make_shared<GazpopGeoparser>(ref, gazetteer->gazetteer);
        case GeoparserKind::rest: return std::make_shared<RestGeoparser>(ref, std::move(rest));
        case GeoparserKind::replay: break;
    }
    ReplayFixture fixture;
    if (ref.fixture_path) fixture = parse_replay_fixture(read_file(*ref.fixture_path));
    return std::make_shared<ReplayGeoparser>(ref, std::move(fixture));
}

}  // namespace geoeval
