#include "iothub/trace.hpp"

#include "iothub/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>

namespace iothub {

namespace {

constexpr double kRestNoise = 0.05;
constexpr double kShakeMin = 8.0;
constexpr double kShakeMax = 15.0;
constexpr int kBurstSamples = 4;

class Uniform {
public:
    explicit Uniform(std::uint64_t seed) : rng_(seed) {}
    /// [lo, hi) with 53 random bits; independent of the standard library's
    /// distribution implementation.
    double operator()(double lo, double hi) {
        const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * u;
    }

private:
    std::mt19937_64 rng_;
};

std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

double parse_double(std::string_view text, std::size_t line) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
        throw Error(Errc::config_error, "trace line " + std::to_string(line) + ": bad number '" +
                                            std::string(text) + "'");
    }
    return v;
}

} // namespace

Trace generate_trace(const std::vector<TraceStage>& stages, std::uint64_t seed, std::int64_t period_ms) {
    if (period_ms <= 0) {
        throw Error(Errc::config_error, "trace period must be positive");
    }
    Uniform uni(seed);
    Trace trace;
    std::int64_t stage_start = 0;
    auto rest = [&](std::int64_t t) {
        return AccelSample{t, uni(-kRestNoise, kRestNoise), uni(-kRestNoise, kRestNoise),
                           kGravity + uni(-kRestNoise, kRestNoise)};
    };
    auto shaken = [&](std::int64_t t, int phase) {
        const double sign = phase % 2 == 0 ? 1.0 : -1.0;
        return AccelSample{t, sign * uni(kShakeMin, kShakeMax), sign * uni(kShakeMin, kShakeMax),
                           kGravity + sign * uni(kShakeMin, kShakeMax)};
    };

    for (const auto& stage : stages) {
        if (!(stage.duration_s > 0)) {
            throw Error(Errc::config_error, "stage durations must be positive");
        }
        if (stage.kind == StageKind::ShakeEvery && !(stage.interval_s > 0)) {
            throw Error(Errc::config_error, "shake_every needs a positive interval");
        }
        const auto duration = static_cast<std::int64_t>(std::llround(stage.duration_s * 1000.0));
        const std::int64_t n = duration / period_ms;
        const std::int64_t stage_end = stage_start + n * period_ms;

        std::vector<std::int64_t> events;
        if (stage.kind == StageKind::ShakeEvery) {
            const auto interval = static_cast<std::int64_t>(std::llround(stage.interval_s * 1000.0));
            for (std::int64_t off = interval / 2; off < n * period_ms; off += interval) {
                // Align events to the sampling grid so each one starts a burst.
                const std::int64_t aligned = stage_start + (off / period_ms) * period_ms;
                if (events.empty() || events.back() != aligned) {
                    events.push_back(aligned);
                }
            }
        }
        std::size_t next_event = 0;
        std::int64_t burst_left = 0;
        int phase = 0;
        for (std::int64_t i = 0; i < n; ++i) {
            const std::int64_t t = stage_start + i * period_ms;
            switch (stage.kind) {
            case StageKind::Rest: trace.samples.push_back(rest(t)); break;
            case StageKind::ShakeFast: trace.samples.push_back(shaken(t, phase++)); break;
            case StageKind::ShakeEvery:
                if (next_event < events.size() && t == events[next_event]) {
                    trace.shake_events.push_back(t);
                    ++next_event;
                    burst_left = kBurstSamples;
                    phase = 0;
                }
                if (burst_left > 0) {
                    trace.samples.push_back(shaken(t, phase++));
                    --burst_left;
                } else {
                    trace.samples.push_back(rest(t));
                }
                break;
            }
        }
        trace.stage_bounds.emplace_back(stage_start, stage_end);
        stage_start = stage_end;
    }
    return trace;
}

std::vector<TraceStage> evaluation_stages() {
    return {{StageKind::ShakeEvery, 180, 30}, {StageKind::Rest, 60, 0}, {StageKind::ShakeFast, 30, 0}};
}

std::vector<TraceStage> parse_stages(const std::string& text) {
    static const std::regex item(R"(^\s*(shake_every\(([0-9.]+)\)|rest|shake_fast)\s*:\s*([0-9.]+)\s*$)");
    std::vector<TraceStage> out;
    std::stringstream ss(text);
    for (std::string part; std::getline(ss, part, ',');) {
        std::smatch m;
        if (!std::regex_match(part, m, item)) {
            throw Error(Errc::config_error, "bad stage '" + part + "'");
        }
        TraceStage s;
        const std::string kind = m[1].str();
        s.kind = kind == "rest" ? StageKind::Rest
                 : kind == "shake_fast" ? StageKind::ShakeFast
                                        : StageKind::ShakeEvery;
        if (s.kind == StageKind::ShakeEvery) {
            s.interval_s = parse_double(m[2].str(), 0);
        }
        s.duration_s = parse_double(m[3].str(), 0);
        if (!(s.duration_s > 0) || (s.kind == StageKind::ShakeEvery && !(s.interval_s > 0))) {
            throw Error(Errc::config_error, "bad stage '" + part + "'");
        }
        out.push_back(s);
    }
    if (out.empty()) {
        throw Error(Errc::config_error, "no stages given");
    }
    return out;
}

std::string format_stages(const std::vector<TraceStage>& stages) {
    std::string out;
    for (const auto& s : stages) {
        if (!out.empty()) {
            out += ',';
        }
        switch (s.kind) {
        case StageKind::Rest: out += "rest"; break;
        case StageKind::ShakeFast: out += "shake_fast"; break;
        case StageKind::ShakeEvery: out += "shake_every(" + format_double(s.interval_s) + ")"; break;
        }
        out += ":" + format_double(s.duration_s);
    }
    return out;
}

void write_trace(std::ostream& out, const std::vector<AccelSample>& samples) {
    for (const auto& s : samples) {
        out << s.t_ms << '\t' << format_double(s.x) << '\t' << format_double(s.y) << '\t'
            << format_double(s.z) << '\n';
    }
}

void save_trace(const std::filesystem::path& path, const std::vector<AccelSample>& samples) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(Errc::io_error, "cannot write " + path.string());
    }
    write_trace(out, samples);
    if (!out) {
        throw Error(Errc::io_error, "cannot write " + path.string());
    }
}

std::vector<AccelSample> read_trace(std::istream& in) {
    std::vector<AccelSample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || line.front() == '#') {
            continue;
        }
        std::vector<std::string_view> cols;
        std::string_view rest(line);
        for (;;) {
            const auto tab = rest.find('\t');
            cols.push_back(rest.substr(0, tab));
            if (tab == std::string_view::npos) {
                break;
            }
            rest.remove_prefix(tab + 1);
        }
        if (cols.size() != 4) {
            throw Error(Errc::config_error, "trace line " + std::to_string(lineno) +
                                                ": expected 4 tab-separated columns");
        }
        AccelSample s;
        auto [ptr, ec] = std::from_chars(cols[0].data(), cols[0].data() + cols[0].size(), s.t_ms);
        if (ec != std::errc() || ptr != cols[0].data() + cols[0].size()) {
            throw Error(Errc::config_error, "trace line " + std::to_string(lineno) + ": bad t_ms");
        }
        s.x = parse_double(cols[1], lineno);
        s.y = parse_double(cols[2], lineno);
        s.z = parse_double(cols[3], lineno);
        out.push_back(s);
    }
    return out;
}

std::vector<AccelSample> load_trace(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::io_error, "cannot read trace " + path.string());
    }
    return read_trace(in);
}

} // namespace iothub
