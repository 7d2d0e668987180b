#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <thread>

namespace iothub {

enum class ClockMode { Wall, Simulated };

/// Time source plus periodic task runner. Tasks return false to stop.
class Scheduler {
public:
    using TaskId = std::uint64_t;
    using Task = std::function<bool()>;

    virtual ~Scheduler() = default;
    virtual std::int64_t now_ms() const = 0;
    virtual TaskId schedule_periodic(std::int64_t first_ms, std::int64_t period_ms, Task task) = 0;
    virtual void cancel(TaskId id) = 0;
    virtual ClockMode mode() const noexcept = 0;
};

/// Virtual clock: time only moves inside run_until(), and due tasks run in
/// (due time, scheduling order) order on the calling thread.
class SimulatedScheduler final : public Scheduler {
public:
    explicit SimulatedScheduler(std::int64_t start_ms = 0) : now_(start_ms) {}

    std::int64_t now_ms() const override;
    TaskId schedule_periodic(std::int64_t first_ms, std::int64_t period_ms, Task task) override;
    void cancel(TaskId id) override;
    ClockMode mode() const noexcept override { return ClockMode::Simulated; }

    /// Runs every task due at or before `t_ms`, then sets the clock to t_ms.
    void run_until(std::int64_t t_ms);
    /// Runs until no task remains. Returns false if `limit_ms` was reached first.
    bool run_all(std::int64_t limit_ms = INT64_MAX / 2);
    bool idle() const;

private:
    struct Entry {
        TaskId id;
        std::int64_t period;
        Task task;
    };

    mutable std::mutex mutex_;
    std::int64_t now_;
    TaskId next_id_ = 1;
    std::multimap<std::pair<std::int64_t, TaskId>, Entry> queue_;
};

/// Real-time clock (milliseconds since the Unix epoch) with a worker thread.
class WallScheduler final : public Scheduler {
public:
    WallScheduler();
    ~WallScheduler() override;
    WallScheduler(const WallScheduler&) = delete;
    WallScheduler& operator=(const WallScheduler&) = delete;

    std::int64_t now_ms() const override;
    TaskId schedule_periodic(std::int64_t first_ms, std::int64_t period_ms, Task task) override;
    void cancel(TaskId id) override;
    ClockMode mode() const noexcept override { return ClockMode::Wall; }

private:
    struct Entry {
        TaskId id;
        std::int64_t period;
        Task task;
    };

    void run();

    std::mutex mutex_;
    std::condition_variable cv_;
    bool stop_ = false;
    TaskId next_id_ = 1;
    std::multimap<std::pair<std::int64_t, TaskId>, Entry> queue_;
    std::thread worker_;
};

} // namespace iothub
