#include "iothub/clock.hpp"

#include <chrono>

namespace iothub {

std::int64_t SimulatedScheduler::now_ms() const {
    std::lock_guard lock(mutex_);
    return now_;
}

Scheduler::TaskId SimulatedScheduler::schedule_periodic(std::int64_t first_ms, std::int64_t period_ms,
                                                        Task task) {
    std::lock_guard lock(mutex_);
    const TaskId id = next_id_++;
    queue_.emplace(std::pair{first_ms, id}, Entry{id, period_ms, std::move(task)});
    return id;
}

void SimulatedScheduler::cancel(TaskId id) {
    std::lock_guard lock(mutex_);
    for (auto it = queue_.begin(); it != queue_.end(); ++it) {
        if (it->second.id == id) {
            queue_.erase(it);
            return;
        }
    }
}

void SimulatedScheduler::run_until(std::int64_t t_ms) {
    for (;;) {
        Entry entry;
        std::int64_t due = 0;
        {
            std::lock_guard lock(mutex_);
            if (queue_.empty() || queue_.begin()->first.first > t_ms) {
                if (now_ < t_ms) {
                    now_ = t_ms;
                }
                return;
            }
            auto node = queue_.extract(queue_.begin());
            due = node.key().first;
            entry = std::move(node.mapped());
            if (due > now_) {
                now_ = due;
            }
        }
        // The task runs unlocked so it may schedule or cancel others.
        const bool again = entry.task() && entry.period > 0;
        if (again) {
            std::lock_guard lock(mutex_);
            const TaskId id = entry.id;
            queue_.emplace(std::pair{due + entry.period, id}, std::move(entry));
        }
    }
}

bool SimulatedScheduler::run_all(std::int64_t limit_ms) {
    for (;;) {
        std::int64_t next = 0;
        {
            std::lock_guard lock(mutex_);
            if (queue_.empty()) {
                return true;
            }
            next = queue_.begin()->first.first;
        }
        if (next > limit_ms) {
            run_until(limit_ms);
            return false;
        }
        run_until(next);
    }
}

bool SimulatedScheduler::idle() const {
    std::lock_guard lock(mutex_);
    return queue_.empty();
}

WallScheduler::WallScheduler() : worker_([this] { run(); }) {}

WallScheduler::~WallScheduler() {
    {
        std::lock_guard lock(mutex_);
        stop_ = true;
    }
    cv_.notify_all();
    worker_.join();
}

std::int64_t WallScheduler::now_ms() const {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

Scheduler::TaskId WallScheduler::schedule_periodic(std::int64_t first_ms, std::int64_t period_ms,
                                                   Task task) {
    TaskId id = 0;
    {
        std::lock_guard lock(mutex_);
        id = next_id_++;
        queue_.emplace(std::pair{first_ms, id}, Entry{id, period_ms, std::move(task)});
    }
    cv_.notify_all();
    return id;
}

void WallScheduler::cancel(TaskId id) {
    std::lock_guard lock(mutex_);
    for (auto it = queue_.begin(); it != queue_.end(); ++it) {
        if (it->second.id == id) {
            queue_.erase(it);
            return;
        }
    }
}

void WallScheduler::run() {
    std::unique_lock lock(mutex_);
    while (!stop_) {
        if (queue_.empty()) {
            cv_.wait(lock);
            continue;
        }
        const auto due = queue_.begin()->first.first;
        const auto now = now_ms();
        if (due > now) {
            cv_.wait_for(lock, std::chrono::milliseconds(due - now));
            continue;
        }
        auto node = queue_.extract(queue_.begin());
        Entry entry = std::move(node.mapped());
        lock.unlock();
        const bool again = entry.task() && entry.period > 0;
        lock.lock();
        if (again && !stop_) {
            const TaskId id = entry.id;
            queue_.emplace(std::pair{due + entry.period, id}, std::move(entry));
        }
    }
}

} // namespace iothub
