#pragma once
// The strategic host loop: plan one directive per step over the
// step-summary context, dispatch it to a manager, absorb the summary,
// stop, finalize. Strictly sequential; the host never touches a tool.

#include "triad/backends.hpp"
#include "triad/core.hpp"
#include "triad/scheduler.hpp"
#include "triad/telemetry.hpp"

#include <functional>
#include <map>
#include <set>
#include <string>

namespace triad {

struct HostConfig {
    int step_limit = 12;   // S
    int reprompt_limit = 1; // invalid actions tolerated before PlanningFailed
    std::string plan_template;     // {query} {exchanges} {managers}
    std::string finalize_template; // {query} {exchanges}
};

struct RegisteredManager {
    std::string id;
    std::string capability; // one line shown to the host
    std::function<StepSummary(const StepDirective&)> handle;
};

class ManagerRegistry {
public:
    void add(RegisteredManager manager); // ConfigInvalid on duplicate id
    bool empty() const { return managers_.empty(); }
    std::set<std::string> ids() const;
    const RegisteredManager& at(const std::string& id) const;
    // One "- id: capability" line per manager, id order, trailing newline.
    std::string capability_lines() const;

private:
    std::map<std::string, RegisteredManager> managers_;
};

// Rendering used for the {exchanges} placeholder; exposed so tests can pin
// the exact bytes the host sees.
std::string render_exchanges(const HostContext& ctx);

class Host {
public:
    Host(HostConfig cfg, Backend& backend, const ManagerRegistry& registry, TraceSink& sink,
         RunClock& clock);

    // One planning decision over the current context. Invalid completions
    // are re-prompted up to reprompt_limit times, then PlanningFailed.
    HostAction plan_next(const HostContext& ctx, long* tokens_in = nullptr,
                         long* tokens_out = nullptr);

    FinalAnswer finalize(const HostContext& ctx, TerminationReason reason);

    // Algorithm: loop plan -> dispatch -> append until STOP or the step
    // limit, then finalize (best effort on limit exhaustion). Emits the
    // full trace; throws TaskFailed on unrecoverable errors with the
    // partial trace already on disk.
    FinalAnswer run_task(const TaskQuery& query);

private:
    HostConfig cfg_;
    Backend& backend_;
    const ManagerRegistry& registry_;
    TraceSink& sink_;
    RunClock& clock_;
};

} // namespace triad
