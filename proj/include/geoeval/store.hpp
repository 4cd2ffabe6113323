#pragma once

#include <sqlite3.h>

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "geoeval/error.hpp"

namespace geoeval {

namespace detail {

struct SqliteCloser {
    void operator()(sqlite3* db) const { sqlite3_close_v2(db); }
};

class Statement {
public:
    Statement(sqlite3* db, std::string_view sql) : db_(db) {
        if (sqlite3_prepare_v2(db, sql.data(), static_cast<int>(sql.size()), &stmt_, nullptr) != SQLITE_OK)
            throw StoreError(std::string("cannot prepare statement: ") + sqlite3_errmsg(db));
    }
    ~Statement() { sqlite3_finalize(stmt_); }
    Statement(const Statement&) = delete;
    Statement& operator=(const Statement&) = delete;

    Statement& bind(int i, std::string_view v) {
        check(sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT));
        return *this;
    }
    Statement& bind(int i, std::int64_t v) {
        check(sqlite3_bind_int64(stmt_, i, v));
        return *this;
    }

    /// Returns true while rows are available.
    bool step() {
        int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        throw StoreError(std::string("store query failed: ") + sqlite3_errmsg(db_));
    }

    std::string text(int col) const {
        auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt_, col));
        return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col))) : std::string{};
    }
    std::int64_t integer(int col) const { return sqlite3_column_int64(stmt_, col); }

private:
    void check(int rc) const {
        if (rc != SQLITE_OK) throw StoreError(std::string("cannot bind parameter: ") + sqlite3_errmsg(db_));
    }

    sqlite3* db_;
    sqlite3_stmt* stmt_ = nullptr;
};

}  // namespace detail

struct StoredExperiment {
    std::string id;
    std::int64_t created_at_us = 0;
    std::int64_t seq = 0;
    std::string status;
    std::string record_json;
};

struct StoredCorpus {
    std::string id;
    std::string name;
    std::string genre;
    bool fully_annotated = true;
    std::int64_t entry_count = 0;
};

/// Keyset cursor for newest-first listings.
struct ListCursor {
    std::int64_t created_at_us = 0;
    std::int64_t seq = 0;
};

/// Single-file SQLite store for cached geoparser output, experiment records and registered
/// corpora/geoparsers. One connection, serialized by a mutex; each write is one transaction.
class CacheStore {
public:
    explicit CacheStore(const std::string& path) {
        sqlite3* raw = nullptr;
        int rc = sqlite3_open_v2(path.c_str(), &raw, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX, nullptr);
        db_.reset(raw);
        if (rc != SQLITE_OK)
            throw StoreError("cannot open store \"" + path + "\": " + (raw ? sqlite3_errmsg(raw) : "out of memory"));
        sqlite3_busy_timeout(db_.get(), 5000);
        if (path != ":memory:") exec("PRAGMA journal_mode=WAL");
        exec(R"sql(
            CREATE TABLE IF NOT EXISTS geoparse_cache (
                cache_key TEXT PRIMARY KEY,
                corpus_hash TEXT NOT NULL,
                parser_id TEXT NOT NULL,
                parser_version TEXT NOT NULL,
                results TEXT NOT NULL);
            CREATE TABLE IF NOT EXISTS experiments (
                seq INTEGER PRIMARY KEY AUTOINCREMENT,
                id TEXT UNIQUE NOT NULL,
                created_at INTEGER NOT NULL,
                status TEXT NOT NULL,
                record TEXT NOT NULL);
            CREATE INDEX IF NOT EXISTS experiments_by_time ON experiments(created_at DESC, seq DESC);
            CREATE TABLE IF NOT EXISTS corpora (
                id TEXT PRIMARY KEY,
                name TEXT NOT NULL,
                genre TEXT NOT NULL,
                fully_annotated INTEGER NOT NULL,
                entry_count INTEGER NOT NULL,
                xml TEXT NOT NULL);
            CREATE TABLE IF NOT EXISTS geoparsers (
                id TEXT PRIMARY KEY,
                record TEXT NOT NULL);
        )sql");
    }

    // --- geoparser output cache ---

    std::optional<std::string> cached_results(std::string_view key) {
        std::lock_guard lock(mutex_);
        detail::Statement q(db_.get(), "SELECT results FROM geoparse_cache WHERE cache_key = ?");
        q.bind(1, key);
        if (!q.step()) return std::nullopt;
        return q.text(0);
    }

    void put_results(std::string_view key, std::string_view corpus_hash, std::string_view parser_id,
                     std::string_view parser_version, std::string_view results_json) {
        std::lock_guard lock(mutex_);
        detail::Statement q(db_.get(),
                            "INSERT OR REPLACE INTO geoparse_cache(cache_key, corpus_hash, parser_id, parser_version, results) "
                            "VALUES (?, ?, ?, ?, ?)");
        q.bind(1, key).bind(2, corpus_hash).bind(3, parser_id).bind(4, parser_version).bind(5, results_json);
        q.step();
    }

    /// Drops cached output of one geoparser (every version); returns the number of rows removed.
    std::int64_t invalidate_cache(std::string_view parser_id) {
        std::lock_guard lock(mutex_);
        detail::Statement q(db_.get(), "DELETE FROM geoparse_cache WHERE parser_id = ?");
        q.bind(1, parser_id);
        q.step();
        return sqlite3_changes(db_.get());
    }

    /// Per-key lock serializing cache fills, so identical concurrent runs compute once.
    std::shared_ptr<std::mutex> key_lock(const std::string& key) {
        std::lock_guard lock(mutex_);
        auto& slot = key_locks_[key];
        if (!slot) slot = std::make_shared<std::mutex>();
        return slot;
    }

    // --- experiment records ---

    bool experiment_exists(std::string_view id) {
        std::lock_guard lock(mutex_);
        detail::Statement q(db_.get(), "SELECT 1 FROM experiments WHERE id = ?");
        q.bind(1, id);
        return q.step();
    }

    /// Returns false when the id is already taken.
    bool insert_experiment(std::string_view id, std::int64_t created_at_us, std::string_view status, std::string_view record) {
        std::lock_guard lock(mutex_);
        detail::Statement q(db_.get(), "INSERT OR IGNORE INTO experiments(id, created_at, status, record) VALUES (?, ?, ?, ?)");
        q.bind(1, id).bind(2, created_at_us).bind(3, status).bind(4, record);
        q.step();
        return sqlite3_changes(db_.get()) == 1;
    }

    /// Updates a record that is still running. Finished records are immutable; returns false for them.
    bool update_experiment(std::string_view id, std::string_view status, std::string_view record) {
        std::lock_guard lock(mutex_);
        detail::Statement q(db_.get(), "UPDATE experiments SET status = ?, record = ? WHERE id = ? AND status = 'running'");
        q.bind(1, status).bind(2, record).bind(3, id);
        q.step();
        return sqlite3_changes(db_.get()) == 1;
    }

    std::optional<StoredExperiment> experiment(std::string_view id) {
        std::lock_guard lock(mutex_);
        detail::Statement q(db_.get(), "SELECT id, created_at, seq, status, record FROM experiments WHERE id = ?");
        q.bind(1, id);
        if (!q.step()) return std::nullopt;
        return row(q);
    }

    /// Newest first; `after` continues a previous page.
    std::vector<StoredExperiment> list_experiments(std::optional<ListCursor> after, std::int64_t limit) {
        std::lock_guard lock(mutex_);
        std::vector<StoredExperiment> out;
        if (after) {
            detail::Statement q(db_.get(),
                                "SELECT id, created_at, seq, status, record FROM experiments "
                                "WHERE created_at < ? OR (created_at = ? AND seq < ?) "
                                "ORDER BY created_at DESC, seq DESC LIMIT ?");
            q.bind(1, after->created_at_us).bind(2, after->created_at_us).bind(3, after->seq).bind(4, limit);
            while (q.step()) out.push_back(row(q));
        } else {
            detail::Statement q(db_.get(),
                                "SELECT id, created_at, seq, status, record FROM experiments "
                                "ORDER BY created_at DESC, seq DESC LIMIT ?");
            q.bind(1, limit);
            while (q.step()) out.push_back(row(q));
        }
        return out;
    }

    // --- registered corpora ---

    /// Returns false when the id is taken.
    bool insert_corpus(const StoredCorpus& meta, std::string_view xml) {
        std::lock_guard lock(mutex_);
        detail::Statement q(db_.get(),
                            "INSERT OR IGNORE INTO corpora(id, name, genre, fully_annotated, entry_count, xml) VALUES (?, ?, ?, ?, ?, ?)");
        q.bind(1, meta.id).bind(2, meta.name).bind(3, meta.genre).bind(4, std::int64_t{meta.fully_annotated}).bind(5, meta.entry_count).bind(6, xml);
        q.step();
        return sqlite3_changes(db_.get()) == 1;
    }

    std::optional<std::string> corpus_xml(std::string_view id) {
        std::lock_guard lock(mutex_);
        detail::Statement q(db_.get(), "SELECT xml FROM corpora WHERE id = ?");
        q.bind(1, id);
        if (!q.step()) return std::nullopt;
        return q.text(0);
    }

    std::optional<StoredCorpus> corpus_meta(std::string_view id) {
        std::lock_guard lock(mutex_);
        detail::Statement q(db_.get(), "SELECT id, name, genre, fully_annotated, entry_count FROM corpora WHERE id = ?");
        q.bind(1, id);
        if (!q.step()) return std::nullopt;
        return StoredCorpus{q.text(0), q.text(1), q.text(2), q.integer(3) != 0, q.integer(4)};
    }

    std::vector<StoredCorpus> list_corpora() {
        std::lock_guard lock(mutex_);
        detail::Statement q(db_.get(), "SELECT id, name, genre, fully_annotated, entry_count FROM corpora ORDER BY id");
        std::vector<StoredCorpus> out;
        while (q.step()) out.push_back({q.text(0), q.text(1), q.text(2), q.integer(3) != 0, q.integer(4)});
        return out;
    }

    // --- registered geoparsers ---

    bool insert_geoparser(std::string_view id, std::string_view record) {
        std::lock_guard lock(mutex_);
        detail::Statement q(db_.get(), "INSERT OR IGNORE INTO geoparsers(id, record) VALUES (?, ?)");
        q.bind(1, id).bind(2, record);
        q.step();
        return sqlite3_changes(db_.get()) == 1;
    }

    std::optional<std::string> geoparser_record(std::string_view id) {
        std::lock_guard lock(mutex_);
        detail::Statement q(db_.get(), "SELECT record FROM geoparsers WHERE id = ?");
        q.bind(1, id);
        if (!q.step()) return std::nullopt;
        return q.text(0);
    }

    std::vector<std::string> list_geoparsers() {
        std::lock_guard lock(mutex_);
        detail::Statement q(db_.get(), "SELECT record FROM geoparsers ORDER BY id");
        std::vector<std::string> out;
        while (q.step()) out.push_back(q.text(0));
        return out;
    }

private:
    void exec(const char* sql) {
        char* err = nullptr;
        if (sqlite3_exec(db_.get(), sql, nullptr, nullptr, &err) != SQLITE_OK) {
            std::string msg = err ? err : "unknown error";
            sqlite3_free(err);
            throw StoreError("store setup failed: " + msg);
        }
    }

    static StoredExperiment row(const detail::Statement& q) {
        return StoredExperiment{q.text(0), q.integer(1), q.integer(2), q.text(3), q.text(4)};
    }

    std::unique_ptr<sqlite3, detail::SqliteCloser> db_;
    std::mutex mutex_;
    std::map<std::string, std::shared_ptr<std::mutex>> key_locks_;
};

}  // namespace geoeval
