#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"

#include "geoeval/error.hpp"
#include "geoeval/geoparse.hpp"
#include "geoeval/rate_limit.hpp"

namespace geoeval {

struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{1000};  // doubles after every failed attempt
    std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
};

struct RestOptions {
    std::chrono::seconds connect_timeout{10};
    std::chrono::seconds read_timeout{120};
    RetryPolicy retry;
    /// Defaults to the process-wide limiter for the geoparser id when the ref has a rate limit.
    std::shared_ptr<RateLimiter> limiter;
};

/// Adapter for a geoparser reachable over HTTP. The entry text is POSTed as text/plain and the
/// response must follow the output JSON contract.
class RestGeoparser final : public Geoparser {
public:
    explicit RestGeoparser(GeoparserRef ref, RestOptions options = {}) : Geoparser(std::move(ref)), options_(std::move(options)) {
        validate_ref(this->ref());
        if (this->ref().kind != GeoparserKind::rest) throw ValidationError("RestGeoparser needs a rest geoparser record");
        url_ = *parse_url(*this->ref().endpoint_url);
        if (!options_.limiter && this->ref().rate_limit)
            options_.limiter = shared_rate_limiter(this->ref().id, static_cast<double>(*this->ref().rate_limit));
    }

    std::vector<std::string> warnings() const {
        std::lock_guard lock(mutex_);
        return warnings_;
    }

protected:
    std::vector<ToponymSpan> recognize_and_resolve(const CorpusEntry& entry) override {
        std::string last_error;
        auto backoff = options_.retry.initial_backoff;
        for (int attempt = 0; attempt <= options_.retry.max_retries; ++attempt) {
            if (attempt > 0) {
                options_.retry.sleep(backoff);
                backoff *= 2;
            }
            if (options_.limiter) options_.limiter->acquire();

            httplib::Client client(url_.origin());
            client.set_connection_timeout(options_.connect_timeout);
            client.set_read_timeout(options_.read_timeout);
            auto res = client.Post(url_.path, entry.text, "text/plain; charset=utf-8");
            if (!res) {
                last_error = httplib::to_string(res.error());
                continue;
            }
            if (res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status < 200 || res->status >= 300)
                throw HttpStatusError("geoparser '" + ref().id + "' answered HTTP " + std::to_string(res->status) +
                                          " for entry '" + entry.entry_id + "'",
                                      res->status);
            auto parsed = parse_output_json(res->body);
            if (!parsed.warnings.empty()) {
                std::lock_guard lock(mutex_);
                for (auto& w : parsed.warnings) warnings_.push_back("entry '" + entry.entry_id + "': " + w);
            }
            return std::move(parsed.toponyms);
        }
        throw TransportError("geoparser '" + ref().id + "' failed for entry '" + entry.entry_id + "' after " +
                             std::to_string(options_.retry.max_retries + 1) + " attempts: " + last_error);
    }

private:
    RestOptions options_;
    ParsedUrl url_;
    mutable std::mutex mutex_;
    std::vector<std::string> warnings_;
};

inline GeoparseResult geoparse_remote(const GeoparserRef& ref, const CorpusEntry& entry, RestOptions options = {}) {
    RestGeoparser parser(ref, std::move(options));
    return parser.geoparse(entry);
}

}  // namespace geoeval
