#include "iothub/storage.hpp"

#include "iothub/canonical.hpp"
#include "iothub/error.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>

#include <unistd.h>

namespace iothub {

struct TimeSeriesStore::Series {
    FeedDescriptor desc;
    bool history = true;
    std::deque<Sample> samples;
    std::int64_t last_seq = 0;
    std::optional<std::int64_t> last_t;
    std::filesystem::path log_path;
    std::FILE* log = nullptr;
    std::size_t log_lines = 0;
    mutable std::shared_mutex mutex;

    ~Series() {
        if (log != nullptr) {
            std::fclose(log);
        }
    }
};

std::string encode_feed_filename(const std::string& feed_id) {
    static constexpr char kHex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : feed_id) {
        if (std::isalnum(c) || c == '.' || c == '_' || c == '-') {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(kHex[c >> 4]);
            out.push_back(kHex[c & 0x0f]);
        }
    }
    if (out == "." || out == "..") {
        out = "%2E" + out.substr(1);
    }
    return out;
}

TimeSeriesStore::TimeSeriesStore(StorageOptions options) : options_(std::move(options)) {
    if (options_.retention.max_samples_per_feed < 1) {
        throw Error(Errc::config_error, "retention must keep at least one sample per feed");
    }
    if (options_.data_dir) {
        std::error_code ec;
        std::filesystem::create_directories(*options_.data_dir / "feeds", ec);
        if (ec) {
            throw Error(Errc::io_error, "cannot create " + (*options_.data_dir / "feeds").string() +
                                            ": " + ec.message());
        }
    }
}

TimeSeriesStore::~TimeSeriesStore() = default;

std::filesystem::path TimeSeriesStore::log_path(const std::string& feed_id) const {
    if (!options_.data_dir) {
        return {};
    }
    return *options_.data_dir / "feeds" / (encode_feed_filename(feed_id) + ".log");
}

std::shared_ptr<TimeSeriesStore::Series> TimeSeriesStore::find(const std::string& feed_id) const {
    std::shared_lock lock(mutex_);
    auto it = series_.find(feed_id);
    if (it == series_.end()) {
        throw Error(Errc::unknown_feed, "unknown feed '" + feed_id + "'", feed_id);
    }
    return it->second;
}

void TimeSeriesStore::register_feed(const FeedDescriptor& desc) {
    std::unique_lock lock(mutex_);
    if (series_.contains(desc.id)) {
        return;
    }
    auto s = std::make_shared<Series>();
    s->desc = desc;
    s->history = desc.has_stored_fields();
    if (s->history && options_.data_dir) {
        s->log_path = log_path(desc.id);
        replay(*s);
        open_log(*s);
    }
    series_.emplace(desc.id, std::move(s));
}

void TimeSeriesStore::drop_feed(const std::string& feed_id, bool remove_log) {
    std::shared_ptr<Series> s;
    {
        std::unique_lock lock(mutex_);
        auto it = series_.find(feed_id);
        if (it == series_.end()) {
            return;
        }
        s = std::move(it->second);
        series_.erase(it);
    }
    std::unique_lock lock(s->mutex);
    if (s->log != nullptr) {
        std::fclose(s->log);
        s->log = nullptr;
    }
    if (remove_log && !s->log_path.empty()) {
        std::error_code ec;
        std::filesystem::remove(s->log_path, ec);
    }
}

bool TimeSeriesStore::has_feed(const std::string& feed_id) const {
    std::shared_lock lock(mutex_);
    return series_.contains(feed_id);
}

void TimeSeriesStore::replay(Series& s) {
    std::ifstream in(s.log_path);
    if (!in) {
        return;
    }
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        Sample sample;
        try {
            sample = sample_from_json(parse_json(line), s.desc);
            validate_sample(s.desc, sample);
        } catch (const Error&) {
            // A torn final write leaves a partial record; nothing after it
            // was acknowledged.
            break;
        }
        if (sample.seq <= s.last_seq || (s.last_t && sample.t_ms < *s.last_t)) {
            break;
        }
        s.last_seq = sample.seq;
        s.last_t = sample.t_ms;
        s.samples.push_back(std::move(sample));
        ++s.log_lines;
        evict(s);
    }
    in.close();
    compact(s);
}

void TimeSeriesStore::open_log(Series& s) {
    s.log = std::fopen(s.log_path.c_str(), "ab");
    if (s.log == nullptr) {
        throw Error(Errc::io_error, "cannot open log " + s.log_path.string());
    }
}

void TimeSeriesStore::evict(Series& s) const {
    const std::size_t cap = s.history ? options_.retention.max_samples_per_feed : 1;
    while (s.samples.size() > cap) {
        s.samples.pop_front();
    }
    if (s.history && options_.retention.max_age_ms && !s.samples.empty()) {
        const std::int64_t horizon = s.samples.back().t_ms - *options_.retention.max_age_ms;
        while (s.samples.size() > 1 && s.samples.front().t_ms < horizon) {
            s.samples.pop_front();
        }
    }
}

void TimeSeriesStore::compact(Series& s) {
    if (s.log_path.empty() || s.log_lines == s.samples.size()) {
        return;
    }
    if (s.log != nullptr) {
        std::fclose(s.log);
        s.log = nullptr;
    }
    auto tmp = s.log_path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        for (const auto& sample : s.samples) {
            out << canonical_of(sample) << '\n';
        }
        out.flush();
        if (!out) {
            throw Error(Errc::io_error, "cannot write " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, s.log_path);
    s.log_lines = s.samples.size();
}

void TimeSeriesStore::append(const Sample& sample) {
    auto s = find(sample.feed_id);
    validate_sample(s->desc, sample);

    std::unique_lock lock(s->mutex);
    if (sample.seq <= s->last_seq) {
        throw Error(Errc::out_of_order,
                    "feed " + sample.feed_id + ": seq " + std::to_string(sample.seq) +
                        " after " + std::to_string(s->last_seq),
                    sample.feed_id);
    }
    if (s->last_t && sample.t_ms < *s->last_t) {
        throw Error(Errc::out_of_order,
                    "feed " + sample.feed_id + ": t_ms " + std::to_string(sample.t_ms) +
                        " before " + std::to_string(*s->last_t),
                    sample.feed_id);
    }
    if (s->log != nullptr) {
        const auto line = canonical_of(sample) + "\n";
        if (std::fwrite(line.data(), 1, line.size(), s->log) != line.size() ||
            std::fflush(s->log) != 0 || (options_.fsync && ::fsync(fileno(s->log)) != 0)) {
            throw Error(Errc::io_error, "write to " + s->log_path.string() + " failed",
                        sample.feed_id);
        }
        ++s->log_lines;
    }
    s->last_seq = sample.seq;
    s->last_t = sample.t_ms;
    s->samples.push_back(sample);
    evict(*s);
    if (s->log != nullptr && s->log_lines > 2 * s->samples.size() + 1024) {
        compact(*s);
        open_log(*s);
    }
}

std::vector<Sample> TimeSeriesStore::query(const std::string& feed_id, std::int64_t from_ms,
                                           std::int64_t to_ms, std::size_t limit) const {
    auto s = find(feed_id);
    std::vector<Sample> out;
    if (from_ms > to_ms || limit == 0) {
        return out;
    }
    std::shared_lock lock(s->mutex);
    auto it = std::lower_bound(s->samples.begin(), s->samples.end(), from_ms,
                               [](const Sample& a, std::int64_t t) { return a.t_ms < t; });
    for (; it != s->samples.end() && it->t_ms <= to_ms && out.size() < limit; ++it) {
        out.push_back(*it);
    }
    return out;
}

std::optional<Sample> TimeSeriesStore::latest(const std::string& feed_id) const {
    auto s = find(feed_id);
    std::shared_lock lock(s->mutex);
    if (s->samples.empty()) {
        return std::nullopt;
    }
    return s->samples.back();
}

std::int64_t TimeSeriesStore::last_seq(const std::string& feed_id) const {
    auto s = find(feed_id);
    std::shared_lock lock(s->mutex);
    return s->last_seq;
}

std::size_t TimeSeriesStore::size(const std::string& feed_id) const {
    auto s = find(feed_id);
    std::shared_lock lock(s->mutex);
    return s->samples.size();
}

} // namespace iothub
