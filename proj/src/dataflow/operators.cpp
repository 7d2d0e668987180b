#include "iothub/operators.hpp"

#include "iothub/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace iothub {

namespace {

template <typename T>
bool ordered(const T& a, CompareOp op, const T& b) {
    switch (op) {
    case CompareOp::Lt: return a < b;
    case CompareOp::Le: return a <= b;
    case CompareOp::Eq: return a == b;
    case CompareOp::Ge: return a >= b;
    case CompareOp::Gt: return a > b;
    case CompareOp::Ne: return a != b;
    }
    return false;
}

/// Tumbling window bookkeeping aligned to the first sample seen.
class Window {
public:
    explicit Window(std::int64_t width) : width_(width) {}

    /// Places `t` in a window. Returns the end time of the window that was
    /// closed by it, if any. Late samples land in the current window.
    std::optional<std::int64_t> advance(std::int64_t t) {
        if (!open_) {
            open_ = true;
            origin_ = t;
            index_ = 0;
            return std::nullopt;
        }
        const std::int64_t idx = t < origin_ ? 0 : (t - origin_) / width_;
        if (idx <= index_) {
            return std::nullopt;
        }
        const auto end = this->end();
        index_ = idx;
        return end;
    }
    std::int64_t end() const { return origin_ + (index_ + 1) * width_; }
    bool open() const { return open_; }

private:
    std::int64_t width_;
    bool open_ = false;
    std::int64_t origin_ = 0;
    std::int64_t index_ = 0;
};

class FilterState final : public OperatorState {
public:
    explicit FilterState(FilterParams p) : p_(std::move(p)) {}

    std::vector<Sample> push(const Sample& in) override {
        auto it = in.values.find(p_.field);
        if (it == in.values.end() || !compare_values(it->second, p_.op, p_.constant)) {
            return {};
        }
        return {in};
    }

private:
    FilterParams p_;
};

class AggregateState final : public OperatorState {
public:
    AggregateState(const NodePlan& node, const UnitRegistry& units)
        : p_(std::get<AggregateParams>(node.op.params)),
          id_(node.op.id),
          out_(node.output.fields.front()),
          units_(units),
          window_(std::max<std::int64_t>(p_.window_ms, 1)) {
        for (const auto& name : p_.fields) {
            types_.emplace(name, node.input.field(name)->semantic_type);
        }
        target_ = types_.at(p_.fields.front());
    }

    std::vector<Sample> push(const Sample& in) override {
        if (p_.window_ms == 0) {
            reset();
            collect(in);
            auto out = emit(in.feed_id, in.seq, in.t_ms);
            return out ? std::vector<Sample>{*out} : std::vector<Sample>{};
        }
        std::vector<Sample> result;
        if (auto closed = window_.advance(in.t_ms)) {
            if (auto out = emit(id_, last_seq_, *closed)) {
                result.push_back(std::move(*out));
            }
            reset();
        }
        collect(in);
        last_seq_ = in.seq;
        return result;
    }

    std::vector<Sample> flush() override {
        if (p_.window_ms == 0 || !window_.open()) {
            return {};
        }
        auto out = emit(id_, last_seq_, window_.end());
        reset();
        return out ? std::vector<Sample>{*out} : std::vector<Sample>{};
    }

private:
    void reset() {
        nums_.clear();
        ints_.clear();
        count_ = 0;
    }

    void collect(const Sample& in) {
        for (const auto& name : p_.fields) {
            auto it = in.values.find(name);
            if (it == in.values.end()) {
                continue;
            }
            ++count_;
            const auto& type = types_.at(name);
            if (!is_numeric(type.value_kind)) {
                continue;
            }
            const double raw = *as_number(it->second);
            const double v = type.unit == target_.unit ? raw : units_.convert(raw, type.unit, target_.unit);
            nums_.push_back(v);
            if (const auto* i = std::get_if<std::int64_t>(&it->second); i && type.unit == target_.unit) {
                ints_.push_back(*i);
            } else {
                ints_.push_back(std::llround(v));
            }
        }
    }

    std::optional<Sample> emit(const std::string& origin, std::int64_t seq, std::int64_t t) const {
        if (count_ == 0) {
            return std::nullopt;
        }
        Sample s{origin, seq, t, {}};
        const bool integral = out_.semantic_type.value_kind == ValueKind::Integer ||
                              out_.semantic_type.value_kind == ValueKind::Timestamp;
        Value v;
        switch (p_.fn) {
        case AggregateFn::Count: v = static_cast<std::int64_t>(count_); break;
        case AggregateFn::Sum:
            if (integral) {
                std::int64_t sum = 0;
                for (auto x : ints_) sum += x;
                v = sum;
            } else {
                double sum = 0;
                for (auto x : nums_) sum += x;
                v = sum;
            }
            break;
        case AggregateFn::Min:
        case AggregateFn::Max: {
            const bool lo = p_.fn == AggregateFn::Min;
            if (integral) {
                v = lo ? *std::min_element(ints_.begin(), ints_.end())
                       : *std::max_element(ints_.begin(), ints_.end());
            } else {
                v = lo ? *std::min_element(nums_.begin(), nums_.end())
                       : *std::max_element(nums_.begin(), nums_.end());
            }
            break;
        }
        case AggregateFn::Mean: {
            double sum = 0;
            for (auto x : nums_) sum += x;
            v = sum / static_cast<double>(nums_.size());
            break;
        }
        case AggregateFn::Magnitude: {
            double sq = 0;
            for (auto x : nums_) sq += x * x;
            v = std::sqrt(sq);
            break;
        }
        }
        s.values.emplace(out_.name, std::move(v));
        return s;
    }

    AggregateParams p_;
    std::string id_;
    FieldDescriptor out_;
    const UnitRegistry& units_;
    std::map<std::string, SemanticType> types_;
    SemanticType target_;
    Window window_;
    std::vector<double> nums_;
    std::vector<std::int64_t> ints_;
    std::size_t count_ = 0;
    std::int64_t last_seq_ = 0;
};

class ResampleState final : public OperatorState {
public:
    explicit ResampleState(const NodePlan& node)
        : p_(std::get<ResampleParams>(node.op.params)),
          identity_(node.identity),
          fields_(node.output.fields),
          window_(p_.period_ms) {}

    std::vector<Sample> push(const Sample& in) override {
        if (identity_) {
            return {in};
        }
        std::vector<Sample> result;
        if (auto closed = window_.advance(in.t_ms)) {
            result.push_back(emit(*closed));
        }
        bucket_.push_back(in);
        return result;
    }

    std::vector<Sample> flush() override {
        if (identity_ || bucket_.empty()) {
            return {};
        }
        return {emit(window_.end())};
    }

private:
    Sample emit(std::int64_t t) {
        const Sample& last = bucket_.back();
        Sample s{last.feed_id, last.seq, t, {}};
        for (const auto& f : fields_) {
            const auto kind = f.semantic_type.value_kind;
            const bool averaged = p_.strategy == ResampleStrategy::Mean &&
                                  (kind == ValueKind::Decimal || kind == ValueKind::Integer);
            if (!averaged) {
                s.values[f.name] = last.values.at(f.name);
                continue;
            }
            double sum = 0;
            for (const auto& b : bucket_) {
                sum += *as_number(b.values.at(f.name));
            }
            const double mean = sum / static_cast<double>(bucket_.size());
            if (kind == ValueKind::Integer) {
                s.values[f.name] = static_cast<std::int64_t>(std::llround(mean));
            } else {
                s.values[f.name] = mean;
            }
        }
        bucket_.clear();
        return s;
    }

    ResampleParams p_;
    bool identity_;
    std::vector<FieldDescriptor> fields_;
    Window window_;
    std::vector<Sample> bucket_;
};

class SlidingDeltaState final : public OperatorState {
public:
    explicit SlidingDeltaState(const NodePlan& node)
        : p_(std::get<SlidingDeltaParams>(node.op.params)),
          integral_(node.output.fields.front().semantic_type.value_kind != ValueKind::Decimal) {}

    std::vector<Sample> push(const Sample& in) override {
        auto it = in.values.find(p_.field);
        if (it == in.values.end()) {
            return {};
        }
        auto prev = previous_.find(in.feed_id);
        if (prev == previous_.end()) {
            previous_.emplace(in.feed_id, it->second);
            return {};
        }
        Sample s{in.feed_id, in.seq, in.t_ms, {}};
        if (integral_) {
            const auto a = std::get<std::int64_t>(it->second);
            const auto b = std::get<std::int64_t>(prev->second);
            s.values.emplace(p_.output, a > b ? a - b : b - a);
        } else {
            s.values.emplace(p_.output, std::fabs(*as_number(it->second) - *as_number(prev->second)));
        }
        prev->second = it->second;
        return {std::move(s)};
    }

private:
    SlidingDeltaParams p_;
    bool integral_;
    std::map<std::string, Value> previous_;
};

class AnonymizeState final : public OperatorState {
public:
    AnonymizeState(const NodePlan& node, const CityTable* cities)
        : p_(std::get<AnonymizeParams>(node.op.params)), cities_(cities) {
        if (cities_ == nullptr || cities_->empty()) {
            throw Error(Errc::empty_table, "operator '" + node.op.id + "': city table is empty",
                        node.op.id);
        }
        for (const auto& f : node.input.fields) {
            if (f.semantic_type.value_kind == ValueKind::GeoPoint) {
                geo_field_ = f.name;
            }
        }
    }

    std::vector<Sample> push(const Sample& in) override {
        auto it = in.values.find(geo_field_);
        if (it == in.values.end()) {
            return {};
        }
        Sample s{in.feed_id, in.seq, in.t_ms, {}};
        s.values.emplace(p_.output, cities_->nearest(std::get<GeoPoint>(it->second)));
        return {std::move(s)};
    }

private:
    AnonymizeParams p_;
    const CityTable* cities_;
    std::string geo_field_;
};

} // namespace

bool compare_values(const Value& lhs, CompareOp op, const Value& rhs) {
    if (std::holds_alternative<bool>(lhs) && std::holds_alternative<bool>(rhs)) {
        const bool a = std::get<bool>(lhs), b = std::get<bool>(rhs);
        return op == CompareOp::Eq ? a == b : op == CompareOp::Ne ? a != b : false;
    }
    if (std::holds_alternative<std::string>(lhs) && std::holds_alternative<std::string>(rhs)) {
        return ordered(std::get<std::string>(lhs), op, std::get<std::string>(rhs));
    }
    if (std::holds_alternative<std::int64_t>(lhs) && std::holds_alternative<std::int64_t>(rhs)) {
        return ordered(std::get<std::int64_t>(lhs), op, std::get<std::int64_t>(rhs));
    }
    const auto a = as_number(lhs), b = as_number(rhs);
    if (a && b && !std::holds_alternative<bool>(lhs) && !std::holds_alternative<bool>(rhs)) {
        return ordered(*a, op, *b);
    }
    return false;
}

std::unique_ptr<OperatorState> make_operator_state(const NodePlan& node, const UnitRegistry& units,
                                                   const CityTable* cities) {
    switch (node.op.kind()) {
    case OperatorKind::Filter:
        return std::make_unique<FilterState>(std::get<FilterParams>(node.op.params));
    case OperatorKind::AggregateWindow: return std::make_unique<AggregateState>(node, units);
    case OperatorKind::Resample: return std::make_unique<ResampleState>(node);
    case OperatorKind::SlidingDelta: return std::make_unique<SlidingDeltaState>(node);
    case OperatorKind::AnonymizeLocation: return std::make_unique<AnonymizeState>(node, cities);
    }
    throw Error(Errc::config_error, "unknown operator kind", node.op.id);
}

PipeRuntime::PipeRuntime(PipePlan plan, const UnitRegistry& units, const CityTable* cities)
    : plan_(std::move(plan)) {
    for (const auto& node : plan_.nodes) {
        states_.push_back(make_operator_state(node, units, cities));
    }
}

void PipeRuntime::deliver(const std::string& producer, std::vector<Sample> samples,
                          std::vector<Sample>& out) {
    if (samples.empty()) {
        return;
    }
    if (!plan_.nodes.empty() && producer == plan_.nodes.back().op.id) {
        for (auto& s : samples) {
            out.push_back(std::move(s));
        }
        return;
    }
    for (std::size_t i = 0; i < plan_.nodes.size(); ++i) {
        const auto& inputs = plan_.nodes[i].op.inputs;
        if (std::find(inputs.begin(), inputs.end(), producer) == inputs.end()) {
            continue;
        }
        for (const auto& s : samples) {
            deliver(plan_.nodes[i].op.id, states_[i]->push(s), out);
        }
    }
}

std::vector<Sample> PipeRuntime::push(const std::string& source_id, const Sample& sample) {
    if (plan_.nodes.empty()) {
        return {sample};
    }
    std::vector<Sample> out;
    Sample origin = sample;
    origin.feed_id = source_id;
    deliver(source_id, {std::move(origin)}, out);
    return out;
}

std::vector<Sample> PipeRuntime::flush() {
    std::vector<Sample> out;
    for (std::size_t i = 0; i < plan_.nodes.size(); ++i) {
        deliver(plan_.nodes[i].op.id, states_[i]->flush(), out);
    }
    return out;
}

std::vector<Sample> run_pipe(const PipePlan& plan, const std::vector<Sample>& samples,
                             const UnitRegistry& units, const CityTable* cities) {
    PipeRuntime rt(plan, units, cities);
    std::vector<Sample> out;
    for (const auto& s : samples) {
        for (auto& o : rt.push(s.feed_id, s)) {
            out.push_back(std::move(o));
        }
    }
    for (auto& o : rt.flush()) {
        out.push_back(std::move(o));
    }
    return out;
}

} // namespace iothub
