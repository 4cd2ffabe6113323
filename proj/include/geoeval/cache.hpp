#pragma once

#include <openssl/evp.h>

#include <cstddef>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "geoeval/corpus.hpp"
#include "geoeval/error.hpp"
#include "geoeval/geoparse.hpp"
#include "geoeval/parallel.hpp"
#include "geoeval/store.hpp"

namespace geoeval {

inline std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

/// Hash of the canonical serialization of the entries; corpus id, name and genre do not count.
inline std::string corpus_content_hash(const Corpus& corpus) {
    Corpus canonical;
    canonical.entries = corpus.entries;
    return sha256_hex(serialize_corpus(canonical));
}

inline std::string cache_key(const std::string& corpus_hash, const GeoparserRef& ref) {
    return sha256_hex(corpus_hash + '\n' + ref.id + '\n' + ref.version);
}

inline std::string encode_results(const std::vector<GeoparseResult>& results) {
    auto list = nlohmann::json::array();
    for (const auto& r : results)
        list.push_back({{"entry_id", r.entry_id},
                        {"parser", r.parser},
                        {"elapsed_us", r.elapsed.count()},
                        {"output", output_json(r.toponyms)}});
    return list.dump();
}

inline std::vector<GeoparseResult> decode_results(std::string_view json) {
    auto list = nlohmann::json::parse(json);
    std::vector<GeoparseResult> out;
    out.reserve(list.size());
    for (const auto& item : list) {
        GeoparseResult r;
        r.entry_id = item.at("entry_id").get<std::string>();
        r.parser = item.at("parser").get<std::string>();
        r.elapsed = std::chrono::microseconds(item.at("elapsed_us").get<std::int64_t>());
        r.toponyms = parse_output_json(item.at("output").dump()).toponyms;
        out.push_back(std::move(r));
    }
    return out;
}

/// Runs `parser` over every entry, or returns the stored results of an earlier identical run
/// (same corpus content, geoparser id and version). A run with any failed entry throws
/// RunFailure and caches nothing.
inline std::vector<GeoparseResult> cached_geoparse(CacheStore& store, Geoparser& parser, const Corpus& corpus,
                                                   std::size_t parallelism = 4) {
    auto corpus_hash = corpus_content_hash(corpus);
    auto key = cache_key(corpus_hash, parser.ref());
    auto key_mutex = store.key_lock(key);
    std::lock_guard key_guard(*key_mutex);

    if (auto hit = store.cached_results(key)) return decode_results(*hit);

    std::vector<GeoparseResult> results(corpus.entries.size());
    auto errors = parallel_for(corpus.entries.size(), parallelism,
                               [&](std::size_t i) { results[i] = parser.geoparse(corpus.entries[i]); });

    std::vector<std::string> failed;
    std::string first_reason;
    bool transport = false;
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (!errors[i]) continue;
        failed.push_back(corpus.entries[i].entry_id);
        try {
            std::rethrow_exception(errors[i]);
        } catch (const TransportError& e) {
            transport = true;
            if (first_reason.empty()) first_reason = e.what();
        } catch (const std::exception& e) {
            if (first_reason.empty()) first_reason = e.what();
        }
    }
    if (!failed.empty()) {
        std::string list;
        for (const auto& id : failed) list += (list.empty() ? "" : ", ") + id;
        throw RunFailure("geoparser '" + parser.ref().id + "' failed on " + std::to_string(failed.size()) + " of " +
                             std::to_string(corpus.entries.size()) + " entries [" + list + "]: " + first_reason,
                         std::move(failed), transport);
    }

    auto encoded = encode_results(results);
    store.put_results(key, corpus_hash, parser.ref().id, parser.ref().version, encoded);
    return decode_results(encoded);
}

}  // namespace geoeval
