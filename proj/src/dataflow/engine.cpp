#include "iothub/engine.hpp"

#include "iothub/canonical.hpp"
#include "iothub/error.hpp"
#include "iothub/operators.hpp"
#include "iothub/pipe_plan.hpp"

#include <algorithm>
#include <iostream>

namespace iothub {

// ---------------------------------------------------------------------------
// Event channels

void EventChannel::push(const Sample& s) {
    {
        std::lock_guard lock(mutex_);
        if (closed_) {
            return;
        }
        if (queue_.size() >= capacity_) {
            queue_.pop_front();
            ++dropped_;
        }
        queue_.push_back(s);
    }
    cv_.notify_one();
}

std::optional<Sample> EventChannel::pop(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; });
    if (queue_.empty()) {
        return std::nullopt;
    }
    Sample s = std::move(queue_.front());
    queue_.pop_front();
    return s;
}

void EventChannel::close() {
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool EventChannel::closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
}

std::uint64_t EventChannel::dropped() const {
    std::lock_guard lock(mutex_);
    return dropped_;
}

Sink Sink::internal(std::function<void(const Sample&)> fn) {
    Sink s;
    s.kind = SinkKind::Internal;
    s.callback = std::move(fn);
    return s;
}

Sink Sink::event_stream(std::shared_ptr<EventChannel> ch) {
    Sink s;
    s.kind = SinkKind::EventStream;
    s.channel = std::move(ch);
    return s;
}

Sink Sink::webhook(std::string url) {
    Sink s;
    s.kind = SinkKind::Webhook;
    s.url = std::move(url);
    return s;
}

// ---------------------------------------------------------------------------
// Webhook delivery: one worker, global FIFO, bounded retries.

class Engine::WebhookQueue {
public:
    WebhookQueue(WebhookPoster poster, int attempts, std::chrono::milliseconds backoff)
        : poster_(std::move(poster)), attempts_(std::max(attempts, 1)), backoff_(backoff),
          worker_([this] { run(); }) {}

    ~WebhookQueue() {
        {
            std::lock_guard lock(mutex_);
            stop_ = true;
        }
        cv_.notify_all();
        worker_.join();
    }

    void enqueue(std::string url, std::string body) {
        {
            std::lock_guard lock(mutex_);
            queue_.emplace_back(std::move(url), std::move(body));
        }
        cv_.notify_all();
    }

    void drain() {
        std::unique_lock lock(mutex_);
        idle_cv_.wait(lock, [&] { return (queue_.empty() && !busy_) || stop_; });
    }

    std::uint64_t failures() const { return failures_; }

private:
    void run() {
        std::unique_lock lock(mutex_);
        for (;;) {
            cv_.wait(lock, [&] { return stop_ || !queue_.empty(); });
            if (stop_) {
                return;
            }
            auto [url, body] = std::move(queue_.front());
            queue_.pop_front();
            busy_ = true;
            lock.unlock();
            bool ok = false;
            for (int attempt = 0; attempt < attempts_ && !ok; ++attempt) {
                if (attempt > 0) {
                    std::this_thread::sleep_for(backoff_ * attempt);
                }
                try {
                    ok = poster_ && poster_(url, body);
                } catch (const std::exception&) {
                    ok = false;
                }
            }
            if (!ok) {
                ++failures_;
            }
            lock.lock();
            busy_ = false;
            if (queue_.empty()) {
                idle_cv_.notify_all();
            }
        }
    }

    WebhookPoster poster_;
    int attempts_;
    std::chrono::milliseconds backoff_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::condition_variable idle_cv_;
    std::deque<std::pair<std::string, std::string>> queue_;
    bool stop_ = false;
    bool busy_ = false;
    std::atomic<std::uint64_t> failures_{0};
    std::thread worker_;
};

// ---------------------------------------------------------------------------

struct Engine::Subscription {
    SubscriptionInfo info;
    Sink sink;
};

struct Engine::PipeRunner {
    std::mutex mutex;
    PipeRuntime runtime;
    std::weak_ptr<Entry> output;

    PipeRunner(PipePlan plan, const UnitRegistry& units, const CityTable* cities)
        : runtime(std::move(plan), units, cities) {}
};

struct Engine::Entry {
    FeedDescriptor desc;
    /// Serializes publishing to this feed; recursive so a subscriber may
    /// publish back into the bus on the same thread.
    std::recursive_mutex lane;
    std::vector<std::shared_ptr<Subscription>> subs;
    std::atomic<bool> deleted{false};
    std::shared_ptr<PipeRunner> runner;
    /// Subscriptions this derived feed holds on its sources.
    std::vector<std::string> source_subs;
};

Engine::Engine(EngineOptions options)
    : options_(std::move(options)),
      owned_types_(options_.types == nullptr ? std::make_unique<TypeRegistry>(TypeRegistry::defaults())
                                             : nullptr),
      types_(options_.types != nullptr ? options_.types : owned_types_.get()),
      store_(options_.storage),
      webhooks_(std::make_unique<WebhookQueue>(
          options_.webhook_poster ? options_.webhook_poster : http_webhook_poster(),
          options_.webhook_attempts, options_.webhook_backoff)) {}

Engine::~Engine() = default;

std::int64_t Engine::now_ms() const {
    if (options_.clock != nullptr) {
        return options_.clock->now_ms();
    }
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

std::shared_ptr<Engine::Entry> Engine::entry(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = feeds_.find(id);
    if (it == feeds_.end()) {
        throw Error(Errc::unknown_feed, "unknown feed '" + id + "'", id);
    }
    return it->second;
}

std::string Engine::next_subscription_id() {
    return "sub-" + std::to_string(next_sub_++);
}

FeedDescriptor Engine::create_feed(FeedDescriptor desc) {
    if (desc.kind == FeedKind::Derived && desc.pipe) {
        const auto report = validate_feed(desc);
        if (!report.ok()) {
            throw Error(Errc::invalid_descriptor, report.summary(), desc.id);
        }
        return create_derived_feed(*desc.pipe, {desc.id, desc.scope, desc.keywords, desc.owner});
    }
    const auto report = validate_feed(desc);
    if (!report.ok()) {
        throw Error(Errc::invalid_descriptor, report.summary(), desc.id);
    }
    if (desc.kind == FeedKind::Derived) {
        throw Error(Errc::invalid_descriptor, "derived feed requires a pipe", desc.id);
    }
    for (const auto& f : desc.fields) {
        if (const auto problems = type_violations(f.semantic_type); !problems.empty()) {
            throw Error(Errc::invalid_descriptor, "field " + f.name + ": " + problems.front(), desc.id);
        }
        const SemanticType* known = types_->find(f.semantic_type.id);
        if (known == nullptr || !(*known == f.semantic_type)) {
            throw Error(Errc::invalid_descriptor,
                        "field " + f.name + ": semantic type '" + f.semantic_type.id + "' is not registered", desc.id);
        }
    }
    std::unique_lock lock(mutex_);
    if (feeds_.contains(desc.id)) {
        throw Error(Errc::duplicate_id, "feed '" + desc.id + "' already exists", desc.id);
    }
    if (desc.created_at == 0) {
        desc.created_at = now_ms();
    }
    store_.register_feed(desc);
    auto e = std::make_shared<Entry>();
    e->desc = desc;
    feeds_.emplace(desc.id, std::move(e));
    order_.push_back(desc.id);
    return desc;
}

FeedDescriptor Engine::create_derived_feed(const PipeSpec& pipe, const DerivedFeedOptions& options) {
    std::string id = options.id;
    if (id.empty()) {
        throw Error(Errc::invalid_descriptor, "feed id is empty");
    }
    std::vector<FeedDescriptor> inputs;
    {
        std::shared_lock lock(mutex_);
        // A cycle exists when the new feed would (transitively) depend on
        // itself. Checked first so a self-reference is not an unknown feed.
        std::set<std::string> seen;
        std::vector<std::string> stack(pipe.sources.begin(), pipe.sources.end());
        while (!stack.empty()) {
            const std::string cur = stack.back();
            stack.pop_back();
            if (cur == id) {
                throw Error(Errc::cycle_error, "feed '" + id + "' would depend on itself", id);
            }
            if (!seen.insert(cur).second) {
                continue;
            }
            if (auto it = feeds_.find(cur); it != feeds_.end()) {
                for (const auto& dep : it->second->desc.dependencies) {
                    stack.push_back(dep);
                }
            }
        }
        for (const auto& src : pipe.sources) {
            auto it = feeds_.find(src);
            if (it == feeds_.end()) {
                throw Error(Errc::unknown_feed, "unknown feed '" + src + "'", src);
            }
            inputs.push_back(it->second->desc);
        }
        if (feeds_.contains(id)) {
            throw Error(Errc::duplicate_id, "feed '" + id + "' already exists", id);
        }
    }

    const PipeContext ctx{types_, &options_.units, &options_.cities};
    PipePlan plan = plan_pipe(pipe, inputs, ctx, id, options.owner);
    FeedDescriptor desc = plan.output;
    desc.scope = options.scope;
    desc.keywords = options.keywords;
    desc.created_at = now_ms();

    auto e = std::make_shared<Entry>();
    e->desc = desc;
    e->runner = std::make_shared<PipeRunner>(std::move(plan), options_.units, &options_.cities);
    e->runner->output = e;
    {
        std::unique_lock lock(mutex_);
        if (feeds_.contains(id)) {
            throw Error(Errc::duplicate_id, "feed '" + id + "' already exists", id);
        }
        for (const auto& src : pipe.sources) {
            if (!feeds_.contains(src)) {
                throw Error(Errc::unknown_feed, "unknown feed '" + src + "'", src);
            }
        }
        store_.register_feed(desc);
        feeds_.emplace(id, e);
        order_.push_back(id);
    }

    std::set<std::string> distinct;
    for (const auto& src : pipe.sources) {
        if (!distinct.insert(src).second) {
            continue;
        }
        std::weak_ptr<PipeRunner> weak = e->runner;
        auto info = subscribe(src, Sink::internal([this, weak, src](const Sample& s) {
            if (auto runner = weak.lock()) {
                deliver_pipe(*runner, src, s);
            }
        }));
        std::lock_guard lane(e->lane);
        e->source_subs.push_back(info.id);
    }
    return desc;
}

void Engine::delete_feed(const std::string& id) {
    std::shared_ptr<Entry> e;
    std::vector<std::string> source_subs;
    {
        std::unique_lock lock(mutex_);
        auto it = feeds_.find(id);
        if (it == feeds_.end()) {
            throw Error(Errc::unknown_feed, "unknown feed '" + id + "'", id);
        }
        std::vector<std::string> deps;
        for (const auto& [other_id, other] : feeds_) {
            const auto& d = other->desc.dependencies;
            if (std::find(d.begin(), d.end(), id) != d.end()) {
                deps.push_back(other_id);
            }
        }
        if (!deps.empty()) {
            std::string list;
            for (const auto& d : deps) {
                list += (list.empty() ? "" : ", ") + d;
            }
            throw Error(Errc::has_dependents, "feed '" + id + "' is used by " + list, id);
        }
        e = it->second;
        e->deleted = true;
        feeds_.erase(it);
        order_.erase(std::remove(order_.begin(), order_.end(), id), order_.end());
        for (auto s = subscription_feed_.begin(); s != subscription_feed_.end();) {
            s = s->second == id ? subscription_feed_.erase(s) : std::next(s);
        }
    }
    {
        std::lock_guard lane(e->lane);
        for (const auto& sub : e->subs) {
            if (sub->sink.channel) {
                sub->sink.channel->close();
            }
        }
        e->subs.clear();
        source_subs = std::move(e->source_subs);
    }
    for (const auto& sub : source_subs) {
        unsubscribe(sub);
    }
    e->runner.reset();
    store_.drop_feed(id, true);
}

std::optional<FeedDescriptor> Engine::find_feed(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = feeds_.find(id);
    if (it == feeds_.end()) {
        return std::nullopt;
    }
    return it->second->desc;
}

FeedDescriptor Engine::feed(const std::string& id) const {
    return entry(id)->desc;
}

std::vector<FeedDescriptor> Engine::feeds() const {
    std::shared_lock lock(mutex_);
    std::vector<FeedDescriptor> out;
    out.reserve(order_.size());
    for (const auto& id : order_) {
        out.push_back(feeds_.at(id)->desc);
    }
    return out;
}

std::vector<std::string> Engine::dependents(const std::string& id) const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& other_id : order_) {
        const auto& d = feeds_.at(other_id)->desc.dependencies;
        if (std::find(d.begin(), d.end(), id) != d.end()) {
            out.push_back(other_id);
        }
    }
    return out;
}

std::size_t Engine::publish_locked(Entry& e, const Sample& sample) {
    if (e.deleted) {
        throw Error(Errc::unknown_feed, "unknown feed '" + e.desc.id + "'", e.desc.id);
    }
    store_.append(sample);
    const auto subs = e.subs;
    for (const auto& sub : subs) {
        switch (sub->sink.kind) {
        case SinkKind::Internal:
            try {
                sub->sink.callback(sample);
            } catch (const std::exception& ex) {
                ++callback_failures_;
                std::cerr << "subscription " << sub->info.id << " on " << e.desc.id
                          << " failed: " << ex.what() << '\n';
            }
            break;
        case SinkKind::EventStream: sub->sink.channel->push(sample); break;
        case SinkKind::Webhook: webhooks_->enqueue(sub->sink.url, canonical_of(sample)); break;
        }
    }
    return subs.size();
}

std::size_t Engine::publish(const Sample& sample) {
    auto e = entry(sample.feed_id);
    std::lock_guard lane(e->lane);
    return publish_locked(*e, sample);
}

Sample Engine::publish_next(const std::string& feed_id, std::map<std::string, Value> values,
                            std::optional<std::int64_t> t_ms) {
    auto e = entry(feed_id);
    std::lock_guard lane(e->lane);
    Sample s{feed_id, store_.last_seq(feed_id) + 1, t_ms ? *t_ms : now_ms(), std::move(values)};
    publish_locked(*e, s);
    return s;
}

void Engine::deliver_pipe(PipeRunner& runner, const std::string& source, const Sample& sample) {
    std::lock_guard lock(runner.mutex);
    publish_outputs(runner, runner.runtime.push(source, sample));
}

void Engine::publish_outputs(PipeRunner& runner, std::vector<Sample> outputs) {
    if (outputs.empty()) {
        return;
    }
    auto out = runner.output.lock();
    if (!out) {
        return;
    }
    std::lock_guard lane(out->lane);
    if (out->deleted) {
        return;
    }
    const auto& id = out->desc.id;
    for (auto& s : outputs) {
        s.feed_id = id;
        s.seq = store_.last_seq(id) + 1;
        // Samples merged from several sources may arrive slightly out of
        // time order; the derived feed stays non-decreasing.
        if (auto last = store_.latest(id); last && s.t_ms < last->t_ms) {
            s.t_ms = last->t_ms;
        }
        publish_locked(*out, s);
    }
}

SubscriptionInfo Engine::subscribe(const std::string& feed_id, Sink sink) {
    if (sink.kind == SinkKind::Internal && !sink.callback) {
        throw Error(Errc::config_error, "internal sink without a callback", feed_id);
    }
    if (sink.kind == SinkKind::EventStream && !sink.channel) {
        throw Error(Errc::config_error, "event-stream sink without a channel", feed_id);
    }
    if (sink.kind == SinkKind::Webhook && sink.url.empty()) {
        throw Error(Errc::config_error, "webhook sink without a URL", feed_id);
    }
    auto e = entry(feed_id);
    auto sub = std::make_shared<Subscription>();
    sub->info = {next_subscription_id(), feed_id, sink.kind, sink.url, now_ms()};
    sub->sink = std::move(sink);
    {
        std::lock_guard lane(e->lane);
        if (e->deleted) {
            throw Error(Errc::unknown_feed, "unknown feed '" + feed_id + "'", feed_id);
        }
        e->subs.push_back(sub);
        std::unique_lock lock(mutex_);
        subscription_feed_.emplace(sub->info.id, feed_id);
    }
    return sub->info;
}

bool Engine::unsubscribe(const std::string& subscription_id) {
    std::shared_ptr<Entry> e;
    {
        std::unique_lock lock(mutex_);
        auto it = subscription_feed_.find(subscription_id);
        if (it == subscription_feed_.end()) {
            return false;
        }
        auto f = feeds_.find(it->second);
        subscription_feed_.erase(it);
        if (f == feeds_.end()) {
            return true;
        }
        e = f->second;
    }
    std::lock_guard lane(e->lane);
    auto it = std::find_if(e->subs.begin(), e->subs.end(),
                           [&](const auto& s) { return s->info.id == subscription_id; });
    if (it != e->subs.end()) {
        if ((*it)->sink.channel) {
            (*it)->sink.channel->close();
        }
        e->subs.erase(it);
    }
    return true;
}

std::vector<SubscriptionInfo> Engine::subscriptions(const std::string& feed_id) const {
    auto e = entry(feed_id);
    std::lock_guard lane(e->lane);
    std::vector<SubscriptionInfo> out;
    for (const auto& s : e->subs) {
        out.push_back(s->info);
    }
    return out;
}

void Engine::flush(const std::string& feed_id) {
    auto e = entry(feed_id);
    auto runner = e->runner;
    if (!runner) {
        return;
    }
    std::lock_guard lock(runner->mutex);
    publish_outputs(*runner, runner->runtime.flush());
}

void Engine::flush_all() {
    std::vector<std::string> ids;
    {
        std::shared_lock lock(mutex_);
        ids = order_;
    }
    // Creation order is topological: sources exist before their dependents.
    for (const auto& id : ids) {
        try {
            flush(id);
        } catch (const Error& err) {
            if (err.code() != Errc::unknown_feed) {
                throw;
            }
        }
    }
}

void Engine::drain_webhooks() {
    webhooks_->drain();
}

std::uint64_t Engine::webhook_failures() const {
    return webhooks_->failures();
}

} // namespace iothub
