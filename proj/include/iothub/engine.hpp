#pragma once

#include "iothub/clock.hpp"
#include "iothub/feed.hpp"
#include "iothub/geo.hpp"
#include "iothub/sample.hpp"
#include "iothub/storage.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

namespace iothub {

/// Bounded FIFO feeding an event stream. When full, the oldest sample is
/// dropped.
class EventChannel {
public:
    explicit EventChannel(std::size_t capacity = 1024) : capacity_(capacity) {}

    void push(const Sample& s);
    /// Waits up to `timeout`; nullopt on timeout or once closed and drained.
    std::optional<Sample> pop(std::chrono::milliseconds timeout);
    void close();
    bool closed() const;
    std::uint64_t dropped() const;

private:
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<Sample> queue_;
    std::size_t capacity_;
    bool closed_ = false;
    std::uint64_t dropped_ = 0;
};

/// POSTs a JSON body to a URL; true on a 2xx response.
using WebhookPoster = std::function<bool(const std::string& url, const std::string& body)>;

/// HTTP poster built on the bundled client.
WebhookPoster http_webhook_poster(std::chrono::milliseconds timeout = std::chrono::milliseconds(2000));

enum class SinkKind { Internal, EventStream, Webhook };

struct Sink {
    SinkKind kind = SinkKind::Internal;
    std::function<void(const Sample&)> callback;
    std::shared_ptr<EventChannel> channel;
    std::string url;

    static Sink internal(std::function<void(const Sample&)> fn);
    static Sink event_stream(std::shared_ptr<EventChannel> ch);
    static Sink webhook(std::string url);
};

struct SubscriptionInfo {
    std::string id;
    std::string feed_id;
    SinkKind kind = SinkKind::Internal;
    std::string url;
    std::int64_t created_at = 0;
};

struct DerivedFeedOptions {
    std::string id;
    Scope scope = Scope::Private;
    std::set<std::string> keywords;
    std::string owner;
};

struct EngineOptions {
    StorageOptions storage;
    const TypeRegistry* types = nullptr;
    UnitRegistry units = UnitRegistry::defaults();
    CityTable cities = CityTable::nordic();
    /// Source of created_at and automatic timestamps; system clock when null.
    Scheduler* clock = nullptr;
    WebhookPoster webhook_poster;
    int webhook_attempts = 3;
    std::chrono::milliseconds webhook_backoff{50};
};

/// Feed registry, dependency graph and publish/subscribe bus. Publishing to
/// one feed is serialized; subscribers see its samples in publish order.
class Engine {
public:
    explicit Engine(EngineOptions options = {});
    ~Engine();
    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    /// Throws invalid_descriptor or duplicate_id. Stamps created_at when 0.
    FeedDescriptor create_feed(FeedDescriptor desc);
    /// Throws cycle_error, unknown_feed, duplicate_id or the planner's errors.
    FeedDescriptor create_derived_feed(const PipeSpec& pipe, const DerivedFeedOptions& options);
    /// Throws unknown_feed or has_dependents.
    void delete_feed(const std::string& id);

    std::optional<FeedDescriptor> find_feed(const std::string& id) const;
    FeedDescriptor feed(const std::string& id) const;
    /// In creation order.
    std::vector<FeedDescriptor> feeds() const;
    std::vector<std::string> dependents(const std::string& id) const;

    /// Validates and stores the sample, then delivers it to every
    /// subscription in creation order. Returns the number of deliveries.
    std::size_t publish(const Sample& sample);
    /// Publishes with seq = last + 1 and t_ms = now when not given.
    Sample publish_next(const std::string& feed_id, std::map<std::string, Value> values,
                        std::optional<std::int64_t> t_ms = std::nullopt);

    /// Throws unknown_feed.
    SubscriptionInfo subscribe(const std::string& feed_id, Sink sink);
    bool unsubscribe(const std::string& subscription_id);
    std::vector<SubscriptionInfo> subscriptions(const std::string& feed_id) const;

    /// Closes open windows of a derived feed's pipe and publishes the result.
    void flush(const std::string& feed_id);
    /// Flushes every derived feed, upstream first.
    void flush_all();

    TimeSeriesStore& storage() noexcept { return store_; }
    const TimeSeriesStore& storage() const noexcept { return store_; }
    const TypeRegistry& types() const noexcept { return *types_; }
    const UnitRegistry& units() const noexcept { return options_.units; }
    const CityTable& cities() const noexcept { return options_.cities; }
    std::int64_t now_ms() const;

    /// Waits until queued webhook deliveries are done (or given up).
    void drain_webhooks();
    std::uint64_t webhook_failures() const;
    /// Internal callbacks that threw; the exception is swallowed so other
    /// subscribers still receive the sample.
    std::uint64_t callback_failures() const noexcept { return callback_failures_; }

private:
    struct Entry;
    struct Subscription;
    struct PipeRunner;
    class WebhookQueue;

    std::shared_ptr<Entry> entry(const std::string& id) const;
    std::size_t publish_locked(Entry& e, const Sample& sample);
    void deliver_pipe(PipeRunner& runner, const std::string& source, const Sample& sample);
    void publish_outputs(PipeRunner& runner, std::vector<Sample> outputs);
    std::string next_subscription_id();

    EngineOptions options_;
    std::unique_ptr<TypeRegistry> owned_types_;
    const TypeRegistry* types_;
    TimeSeriesStore store_;
    std::unique_ptr<WebhookQueue> webhooks_;

    mutable std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<Entry>> feeds_;
    std::vector<std::string> order_;
    std::map<std::string, std::string> subscription_feed_;
    std::atomic<std::uint64_t> next_sub_{1};
    std::atomic<std::uint64_t> callback_failures_{0};
};

} // namespace iothub
