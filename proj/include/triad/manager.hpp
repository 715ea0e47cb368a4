#pragma once
// Manager tier: decompose a directive into parallel subtasks, run them
// through the scheduler in waves, reflect (accept/revise) up to the
// reflect limit, aggregate into one step summary.

#include "triad/backends.hpp"
#include "triad/core.hpp"
#include "triad/scheduler.hpp"
#include "triad/telemetry.hpp"
#include "triad/worker.hpp"

#include <functional>
#include <string>
#include <vector>

namespace triad {

struct ManagerConfig {
    std::string manager_id;
    std::string domain; // search, browser, filesystem, code, ...
    std::string capability; // one human-readable line for the host prompt
    int decompose_cap = 17;  // P_max
    int reflect_limit = 3;   // R_max
    std::string decompose_template; // {directive} {cap}
    std::string reflect_template;   // {directive} {results} {round}
    std::string aggregate_template; // {directive} {results}
    // Closed marker vocabulary scanned as "[MARKER]" in result texts.
    std::vector<std::string> escalation_markers = {"BROWSER_RECOMMENDED"};
};

// Set on the summary when the reflect limit forces an accept.
constexpr const char* kReflectLimitFlag = "REFLECT_LIMIT_REACHED";

struct ReflectionRecord {
    int round = 0;
    ReflectionVerdict verdict;
    std::string rationale;
};

using WorkerInvoker = std::function<WorkerOutcome(const Subtask&, const WorkerDeadline&)>;

class Manager {
public:
    Manager(ManagerConfig cfg, Backend& backend, SchedulerConfig scheduler, WorkerInvoker invoker,
            TraceSink& sink, RunClock& clock);

    const ManagerConfig& config() const { return cfg_; }

    // Full step: decompose -> (wave -> reflect)* -> aggregate.
    StepSummary handle_step(const StepDirective& directive);

    // Individual phases, exposed for focused tests. tokens_in/out pick up
    // the backend cost of the call when non-null.
    std::vector<Subtask> decompose(const StepDirective& directive, long* tokens_in = nullptr,
                                   long* tokens_out = nullptr, int* requested = nullptr);
    ReflectionRecord reflect(const StepDirective& directive,
                             const std::vector<SubtaskResult>& results, int round,
                             long* tokens_in = nullptr, long* tokens_out = nullptr,
                             bool* parse_failed = nullptr);
    StepSummary aggregate(const StepDirective& directive,
                          const std::vector<SubtaskResult>& results, long* tokens_in = nullptr,
                          long* tokens_out = nullptr);

private:
    Completion complete_manager(const std::string& prompt);

    ManagerConfig cfg_;
    Backend& backend_;
    SchedulerConfig scheduler_;
    WorkerInvoker invoker_;
    TraceSink& sink_;
    RunClock& clock_;
};

} // namespace triad
