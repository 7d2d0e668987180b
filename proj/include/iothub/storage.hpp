#pragma once

#include "iothub/feed.hpp"
#include "iothub/sample.hpp"

#include <cstdint>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace iothub {

struct RetentionPolicy {
    std::size_t max_samples_per_feed = 100000;
    std::optional<std::int64_t> max_age_ms;
};

struct StorageOptions {
    RetentionPolicy retention;
    /// Backing logs live under `<data_dir>/feeds/`; in-memory only when unset.
    std::optional<std::filesystem::path> data_dir;
    /// fsync after every append instead of only flushing to the OS.
    bool fsync = false;
};

/// Append-only time-series store. Feeds with stored fields keep a bounded
/// history and a backing log; live-only feeds keep their latest sample.
class TimeSeriesStore {
public:
    static constexpr std::int64_t kMinTime = std::numeric_limits<std::int64_t>::min();
    static constexpr std::int64_t kMaxTime = std::numeric_limits<std::int64_t>::max();

    explicit TimeSeriesStore(StorageOptions options = {});
    ~TimeSeriesStore();
    TimeSeriesStore(const TimeSeriesStore&) = delete;
    TimeSeriesStore& operator=(const TimeSeriesStore&) = delete;

    /// Registers a feed and replays its backing log, if any. Re-registering
    /// an existing feed is a no-op.
    void register_feed(const FeedDescriptor& desc);
    /// Forgets a feed; `remove_log` also deletes its backing log.
    void drop_feed(const std::string& feed_id, bool remove_log = true);
    bool has_feed(const std::string& feed_id) const;

    /// Throws unknown_feed, schema_error or out_of_order (seq not increasing,
    /// or t_ms going backwards).
    void append(const Sample& sample);

    /// Samples with from_ms <= t_ms <= to_ms, ascending, at most `limit`.
    std::vector<Sample> query(const std::string& feed_id, std::int64_t from_ms = kMinTime,
                              std::int64_t to_ms = kMaxTime,
                              std::size_t limit = std::numeric_limits<std::size_t>::max()) const;
    std::optional<Sample> latest(const std::string& feed_id) const;
    /// Highest sequence number ever appended (0 for none), evicted or not.
    std::int64_t last_seq(const std::string& feed_id) const;
    std::size_t size(const std::string& feed_id) const;

    std::filesystem::path log_path(const std::string& feed_id) const;
    const RetentionPolicy& retention() const noexcept { return options_.retention; }

private:
    struct Series;

    std::shared_ptr<Series> find(const std::string& feed_id) const;
    void replay(Series& s);
    void evict(Series& s) const;
    void compact(Series& s);
    void open_log(Series& s);

    StorageOptions options_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<Series>> series_;
};

/// File-name-safe form of a feed id (percent-encodes anything outside
/// [A-Za-z0-9._-]).
std::string encode_feed_filename(const std::string& feed_id);

} // namespace iothub
