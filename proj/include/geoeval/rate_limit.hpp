#pragma once

#include <algorithm>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

namespace geoeval {

/// Token bucket in its GCRA form: each caller reserves the next free slot under a lock and
/// then waits for it. With burst 1, consecutive grants are at least one interval apart.
class RateLimiter {
public:
    using Clock = std::chrono::steady_clock;
    using NowFn = std::function<Clock::time_point()>;
    using SleepFn = std::function<void(Clock::duration)>;

    explicit RateLimiter(double requests_per_hour, double burst = 1.0, NowFn now = &Clock::now,
                         SleepFn sleep = [](Clock::duration d) { std::this_thread::sleep_for(d); })
        : interval_(std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(3600.0 / requests_per_hour))),
          tolerance_(std::chrono::duration_cast<Clock::duration>(interval_ * (std::max(burst, 1.0) - 1.0))),
          now_(std::move(now)),
          sleep_(std::move(sleep)) {}

    /// Reserves a slot and returns the time at which the caller may proceed.
    Clock::time_point reserve() {
        std::lock_guard lock(mutex_);
        auto now = now_();
        if (!started_) {
            tat_ = now;
            started_ = true;
        }
        auto grant = std::max(now, tat_ - tolerance_);
        tat_ = std::max(tat_, grant) + interval_;
        return grant;
    }

    /// Blocks until a slot is available; returns the time spent waiting.
    Clock::duration acquire() {
        auto grant = reserve();
        auto wait = grant - now_();
        if (wait > Clock::duration::zero()) {
            sleep_(wait);
            return wait;
        }
        return Clock::duration::zero();
    }

    Clock::duration interval() const noexcept { return interval_; }

private:
    Clock::duration interval_;
    Clock::duration tolerance_;
    NowFn now_;
    SleepFn sleep_;
    std::mutex mutex_;
    Clock::time_point tat_{};
    bool started_ = false;
};

/// Process-wide limiters keyed by geoparser id, so concurrent experiments share one budget.
inline std::shared_ptr<RateLimiter> shared_rate_limiter(const std::string& geoparser_id, double requests_per_hour) {
    static std::mutex mutex;
    static std::map<std::pair<std::string, double>, std::shared_ptr<RateLimiter>> limiters;
    std::lock_guard lock(mutex);
    auto& slot = limiters[{geoparser_id, requests_per_hour}];
    if (!slot) slot = std::make_shared<RateLimiter>(requests_per_hour);
    return slot;
}

}  // namespace geoeval
