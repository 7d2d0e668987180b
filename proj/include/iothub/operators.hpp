#pragma once

// Streaming evaluation of typed pipes. Each operator keeps its own state;
// windows close when a later sample crosses the boundary or on flush().

#include "iothub/geo.hpp"
#include "iothub/pipe_plan.hpp"
#include "iothub/sample.hpp"

#include <memory>
#include <string>
#include <vector>

namespace iothub {

bool compare_values(const Value& lhs, CompareOp op, const Value& rhs);

class OperatorState {
public:
    virtual ~OperatorState() = default;
    /// `in.feed_id` names the originating source feed. Operators that merge
    /// several origins into one window emit under their own id.
    virtual std::vector<Sample> push(const Sample& in) = 0;
    virtual std::vector<Sample> flush() { return {}; }
};

std::unique_ptr<OperatorState> make_operator_state(const NodePlan& node, const UnitRegistry& units,
                                                   const CityTable* cities);

/// Runs a planned pipe over samples pushed from its sources. Output samples
/// keep the producing sample's seq and origin; callers renumber them.
class PipeRuntime {
public:
    PipeRuntime(PipePlan plan, const UnitRegistry& units, const CityTable* cities);

    std::vector<Sample> push(const std::string& source_id, const Sample& sample);
    std::vector<Sample> flush();

    const PipePlan& plan() const noexcept { return plan_; }

private:
    void deliver(const std::string& producer, std::vector<Sample> samples, std::vector<Sample>& out);

    PipePlan plan_;
    std::vector<std::unique_ptr<OperatorState>> states_;
};

/// Runs a pipe over a finite, time-ordered batch and flushes at the end.
std::vector<Sample> run_pipe(const PipePlan& plan, const std::vector<Sample>& samples,
                             const UnitRegistry& units = UnitRegistry::defaults(),
                             const CityTable* cities = nullptr);

} // namespace iothub
