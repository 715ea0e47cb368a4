#pragma once
// Scenario-driven simulation: scripted backends, mock tools and the
// virtual clock packaged behind one data file, so a scenario is added by
// writing JSON, not engine code. Scenarios are self-verifying: each ships
// with assertions the runner evaluates against the produced trace.

#include "triad/engine.hpp"
#include "triad/telemetry.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace triad {

struct AssertionOutcome {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct ScenarioReport {
    FinalAnswer answer;
    RunMetrics metrics;
    std::vector<TraceEvent> events;
    std::vector<AssertionOutcome> assertions;
    std::string trace_path;

    bool all_pass() const;
};

struct SweepRow {
    int budget = 0;
    double makespan = 0.0;
    double speedup = 0.0;
};

struct ScenarioOverrides {
    std::optional<int> budget;
    std::vector<ExtraManagerSpec> extra_managers;
    std::optional<std::string> trace_path;
    std::optional<std::string> worker_trace_root;
};

class Scenario {
public:
    // Validates the spec document; unknown keys and dangling references
    // are ScenarioInvalid.
    static Scenario load(const std::string& path);
    static Scenario from_json(const nlohmann::json& spec, const std::string& base_dir);

    const std::string& name() const { return name_; }
    const nlohmann::json& spec() const { return spec_; }
    const std::string& base_dir() const { return base_dir_; }

    // The engine config this scenario runs under (scripted backends, mock
    // tools, virtual clock); lets callers drive the engine directly.
    nlohmann::json engine_config() const { return build_engine_config(); }

    // Runs the task under the virtual clock and evaluates every assertion.
    // Assertion failures are reported, not thrown.
    ScenarioReport run(const ScenarioOverrides& overrides = {}) const;

    // One run per budget; rows sorted ascending by budget. Speedup comes
    // from compute_speedup over each run's trace against budget 1.
    std::vector<SweepRow> sweep(std::vector<int> budgets) const;

private:
    nlohmann::json build_engine_config() const;
    Engine::RunOutput execute(const ScenarioOverrides& overrides) const;

    std::string name_;
    std::string base_dir_;
    nlohmann::json spec_;
};

std::string format_sweep_table(const std::vector<SweepRow>& rows);

} // namespace triad
