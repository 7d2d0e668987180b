#include "fixtures.hpp"

#include "iothub/error.hpp"
#include "iothub/operators.hpp"

#include <doctest.h>

#include <random>

using namespace iothub;
using namespace iothub::testing;

namespace {

PipePlan plan_single(const FeedDescriptor& in, std::vector<Operator> ops) {
    PipeSpec p{{in.id}, std::move(ops), ""};
    p.sink = p.operators.back().id;
    return plan_pipe(p, std::vector{in}, {nullptr, nullptr, &CityTable::nordic()}, "out");
}

std::vector<Sample> accel_trace(std::mt19937& rng, int n, std::int64_t period, bool jitter) {
    std::uniform_real_distribution<double> v(-12.0, 12.0);
    std::vector<Sample> out;
    std::int64_t t = 1000;
    for (int i = 0; i < n; ++i) {
        out.push_back(sample("accel", i + 1, t, {{"x", v(rng)}, {"y", v(rng)}, {"z", v(rng)}}));
        t += jitter ? static_cast<std::int64_t>(rng() % (3 * period)) : period;
    }
    return out;
}

// Batch oracle for tumbling windows: group by floor((t - t0) / w) and reduce
// each non-empty group, stamped at the group's end.
struct Group {
    std::int64_t end;
    std::int64_t last_seq;
    std::vector<const Sample*> members;
};

std::vector<Group> groups(const std::vector<Sample>& in, std::int64_t w) {
    std::vector<Group> out;
    const std::int64_t t0 = in.front().t_ms;
    std::int64_t current = -1;
    for (const auto& s : in) {
        const std::int64_t k = (s.t_ms - t0) / w;
        if (k != current) {
            out.push_back({t0 + (k + 1) * w, 0, {}});
            current = k;
        }
        out.back().members.push_back(&s);
        out.back().last_seq = s.seq;
    }
    return out;
}

double reduce(AggregateFn fn, const std::vector<double>& xs) {
    double acc = 0;
    switch (fn) {
    case AggregateFn::Sum:
        for (double x : xs) acc += x;
        return acc;
    case AggregateFn::Mean:
        for (double x : xs) acc += x;
        return acc / static_cast<double>(xs.size());
    case AggregateFn::Min: return *std::min_element(xs.begin(), xs.end());
    case AggregateFn::Max: return *std::max_element(xs.begin(), xs.end());
    case AggregateFn::Magnitude:
        for (double x : xs) acc += x * x;
        return std::sqrt(acc);
    case AggregateFn::Count: return static_cast<double>(xs.size());
    }
    return 0;
}

double num(const Value& v) {
    return *as_number(v);
}

} // namespace

TEST_CASE("compare_values") {
    CHECK(compare_values(Value{3.0}, CompareOp::Gt, Value{2.0}));
    CHECK(compare_values(Value{std::int64_t{3}}, CompareOp::Ge, Value{3.0}));
    CHECK_FALSE(compare_values(Value{std::int64_t{3}}, CompareOp::Lt, Value{std::int64_t{3}}));
    CHECK(compare_values(Value{true}, CompareOp::Eq, Value{true}));
    CHECK(compare_values(Value{true}, CompareOp::Ne, Value{false}));
    CHECK_FALSE(compare_values(Value{true}, CompareOp::Gt, Value{false}));
    CHECK(compare_values(Value{std::string("Oslo")}, CompareOp::Lt, Value{std::string("Oulu")}));
    CHECK_FALSE(compare_values(Value{std::string("1")}, CompareOp::Eq, Value{1.0}));
    CHECK_FALSE(compare_values(Value{true}, CompareOp::Eq, Value{1.0}));
}

TEST_CASE("filter keeps matching samples unchanged") {
    std::mt19937 rng(3);
    const auto in = accel_trace(rng, 300, 200, false);
    const auto plan = plan_single(accel_feed(), {{"f", FilterParams{"x", CompareOp::Gt, 0.5}, {"accel"}}});
    std::vector<Sample> expected;
    for (const auto& s : in) {
        if (num(s.values.at("x")) > 0.5) {
            expected.push_back(s);
        }
    }
    CHECK(run_pipe(plan, in) == expected);
}

TEST_CASE("aggregate per sample (window 0) and sliding delta: the shake pipe") {
    std::mt19937 rng(5);
    const auto in = accel_trace(rng, 500, 200, false);
    const auto plan = plan_single(
        accel_feed(), {{"sum", AggregateParams{AggregateFn::Sum, {"x", "y", "z"}, 0}, {"accel"}},
                       {"delta", SlidingDeltaParams{"sum_acceleration", "force"}, {"sum"}}});
    const auto out = run_pipe(plan, in);
    REQUIRE(out.size() == in.size() - 1);
    for (std::size_t i = 1; i < in.size(); ++i) {
        const auto total = [&](const Sample& s) {
            return num(s.values.at("x")) + num(s.values.at("y")) + num(s.values.at("z"));
        };
        const auto& o = out[i - 1];
        CHECK(o.t_ms == in[i].t_ms);
        CHECK(o.seq == in[i].seq);
        CHECK(o.values.size() == 1);
        CHECK(num(o.values.at("force")) == std::fabs(total(in[i]) - total(in[i - 1])));
    }
}

TEST_CASE("windowed aggregates match the batch oracle") {
    std::mt19937 rng(7);
    for (int round = 0; round < 60; ++round) {
        const auto fn = static_cast<AggregateFn>(rng() % 6);
        const std::int64_t w = 200 * static_cast<std::int64_t>(1 + rng() % 8);
        const auto in = accel_trace(rng, 50 + static_cast<int>(rng() % 200), 200, round % 2 == 1);
        const std::vector<std::string> fields =
            round % 3 == 0 ? std::vector<std::string>{"x"} : std::vector<std::string>{"x", "y", "z"};
        const auto plan = plan_single(accel_feed(), {{"agg", AggregateParams{fn, fields, w}, {"accel"}}});
        const auto out = run_pipe(plan, in);

        const auto gs = groups(in, w);
        REQUIRE(out.size() == gs.size());
        const auto name = aggregate_output_name(fn, "acceleration");
        for (std::size_t g = 0; g < gs.size(); ++g) {
            std::vector<double> xs;
            for (const auto* s : gs[g].members) {
                for (const auto& f : fields) {
                    xs.push_back(num(s->values.at(f)));
                }
            }
            CHECK(out[g].t_ms == gs[g].end);
            CHECK(out[g].seq == gs[g].last_seq);
            if (fn == AggregateFn::Count) {
                CHECK(std::get<std::int64_t>(out[g].values.at(name)) ==
                      static_cast<std::int64_t>(xs.size()));
            } else {
                CHECK(std::get<double>(out[g].values.at(name)) == reduce(fn, xs));
            }
        }
    }
}

TEST_CASE("aggregate converts units to the first field's unit") {
    const auto mixed = sensor("mix", {live("a", temperature()), live("b", kelvin())}, 1000);
    const auto plan = plan_single(mixed, {{"m", AggregateParams{AggregateFn::Mean, {"a", "b"}, 0}, {"mix"}}});
    const auto out = run_pipe(plan, {sample("mix", 1, 0, {{"a", 20.0}, {"b", 293.15 + 2.0}})});
    REQUIRE(out.size() == 1);
    CHECK(std::get<double>(out[0].values.at("mean_temperature")) == doctest::Approx(21.0).epsilon(1e-12));
}

TEST_CASE("integer aggregates stay integral") {
    const auto counts = sensor("c", {live("n", count_type()), live("m", count_type())}, 100);
    const auto plan = plan_single(counts, {{"s", AggregateParams{AggregateFn::Sum, {"n", "m"}, 1000}, {"c"}}});
    std::vector<Sample> in;
    for (int i = 0; i < 25; ++i) {
        in.push_back(sample("c", i + 1, i * 100, {{"n", std::int64_t{i}}, {"m", std::int64_t{1}}}));
    }
    const auto out = run_pipe(plan, in);
    REQUIRE(out.size() == 3);
    CHECK(std::get<std::int64_t>(out[0].values.at("sum_generic_count")) == 45 + 10);
    CHECK(std::get<std::int64_t>(out[1].values.at("sum_generic_count")) == 145 + 10);
    CHECK(std::get<std::int64_t>(out[2].values.at("sum_generic_count")) == 20 + 21 + 22 + 23 + 24 + 5);
}

TEST_CASE("resample matches the batch oracle") {
    std::mt19937 rng(13);
    for (int round = 0; round < 40; ++round) {
        const bool mean = round % 2 == 0;
        const std::int64_t period = 200 * static_cast<std::int64_t>(2 + rng() % 6);
        std::vector<Sample> in;
        std::int64_t t = 0;
        for (int i = 0; i < 120; ++i) {
            in.push_back(sample("weather", i + 1, t,
                                {{"t", t}, {"temperature", static_cast<double>(rng() % 400) / 10.0},
                                 {"humidity", static_cast<double>(rng() % 1000) / 10.0}}));
            t += 200;
        }
        const auto plan = plan_single(
            weather_series(),
            {{"r", ResampleParams{period, mean ? ResampleStrategy::Mean : ResampleStrategy::Last}, {"weather"}}});
        const auto out = run_pipe(plan, in);
        const auto gs = groups(in, period);
        REQUIRE(out.size() == gs.size());
        for (std::size_t g = 0; g < gs.size(); ++g) {
            const Sample& last = *gs[g].members.back();
            CHECK(out[g].t_ms == gs[g].end);
            CHECK(out[g].values.at("t") == last.values.at("t"));
            for (const char* f : {"temperature", "humidity"}) {
                if (mean) {
                    double sum = 0;
                    for (const auto* s : gs[g].members) sum += num(s->values.at(f));
                    CHECK(num(out[g].values.at(f)) == sum / static_cast<double>(gs[g].members.size()));
                } else {
                    CHECK(out[g].values.at(f) == last.values.at(f));
                }
            }
        }
    }
}

TEST_CASE("resample to the source period is the identity") {
    std::mt19937 rng(1);
    const auto in = accel_trace(rng, 40, 200, false);
    const auto plan = plan_single(accel_feed(), {{"r", ResampleParams{200, ResampleStrategy::Mean}, {"accel"}}});
    CHECK(run_pipe(plan, in) == in);
}

TEST_CASE("anonymize_location emits only the nearest city") {
    std::mt19937 rng(19);
    std::uniform_real_distribution<double> lat(54.0, 68.0), lon(-22.0, 30.0);
    const auto plan = plan_single(gps_feed(), {{"anon", AnonymizeParams{}, {"gps"}}});
    std::vector<Sample> in;
    for (int i = 0; i < 300; ++i) {
        in.push_back(sample("gps", i + 1, i * 1000, {{"position", GeoPoint{lat(rng), lon(rng)}}}));
    }
    const auto out = run_pipe(plan, in, UnitRegistry::defaults(), &CityTable::nordic());
    REQUIRE(out.size() == in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
        const auto p = std::get<GeoPoint>(in[i].values.at("position"));
        std::string best;
        double best_d = 1e18;
        for (const auto& c : CityTable::nordic().entries()) {
            const double d = chord_distance_km(p, c.centroid);
            if (d < best_d) {
                best_d = d;
                best = c.name;
            }
        }
        REQUIRE(out[i].values.size() == 1);
        CHECK(std::get<std::string>(out[i].values.at("city")) == best);
    }
}

TEST_CASE("sliding delta tracks each origin feed separately") {
    const auto a = accel_feed("a");
    const auto b = accel_feed("b");
    PipeSpec p{{"a", "b"},
               {{"sum", AggregateParams{AggregateFn::Sum, {"x"}, 0}, {"a", "b"}},
                {"d", SlidingDeltaParams{"sum_acceleration", "force"}, {"sum"}}},
               "d"};
    const auto plan = plan_pipe(p, std::vector{a, b});
    PipeRuntime rt(plan, UnitRegistry::defaults(), nullptr);
    auto s = [](const char* feed, std::int64_t t, double x) {
        return sample(feed, t, t, {{"x", x}, {"y", 0.0}, {"z", 0.0}});
    };
    CHECK(rt.push("a", s("a", 1, 1.0)).empty());
    CHECK(rt.push("b", s("b", 2, 100.0)).empty());
    const auto o1 = rt.push("a", s("a", 3, 4.0));
    REQUIRE(o1.size() == 1);
    CHECK(num(o1[0].values.at("force")) == 3.0);
    const auto o2 = rt.push("b", s("b", 4, 90.0));
    REQUIRE(o2.size() == 1);
    CHECK(num(o2[0].values.at("force")) == 10.0);
}
