#include "triad/host.hpp"
#include "triad/text.hpp"

#include <sstream>

namespace triad {

using nlohmann::json;

void ManagerRegistry::add(RegisteredManager manager) {
    if (managers_.count(manager.id) != 0) {
        throw EngineError(ErrorCode::ConfigInvalid, "duplicate manager id: " + manager.id);
    }
    managers_.emplace(manager.id, std::move(manager));
}

std::set<std::string> ManagerRegistry::ids() const {
    std::set<std::string> out;
    for (const auto& [id, manager] : managers_) {
        (void)manager;
        out.insert(id);
    }
    return out;
}

const RegisteredManager& ManagerRegistry::at(const std::string& id) const {
    auto it = managers_.find(id);
    if (it == managers_.end()) throw EngineError(ErrorCode::UnknownManager, id);
    return it->second;
}

std::string ManagerRegistry::capability_lines() const {
    std::ostringstream out;
    for (const auto& [id, manager] : managers_) {
        out << "- " << id << ": " << manager.capability << "\n";
    }
    return out.str();
}

std::string render_exchanges(const HostContext& ctx) {
    if (ctx.exchanges.empty()) return "(none yet)\n";
    std::ostringstream out;
    for (const auto& exchange : ctx.exchanges) {
        out << "Step " << exchange.directive.index << ": " << exchange.directive.text << "\n";
        out << "Summary " << exchange.directive.index << " (" << exchange.summary.source_manager
            << ", " << exchange.summary.subtask_count << " subtasks";
        for (const auto& flag : exchange.summary.escalation_flags) out << ", [" << flag << "]";
        out << "): " << exchange.summary.text << "\n";
    }
    return out.str();
}

Host::Host(HostConfig cfg, Backend& backend, const ManagerRegistry& registry, TraceSink& sink,
           RunClock& clock)
    : cfg_(std::move(cfg)), backend_(backend), registry_(registry), sink_(sink), clock_(clock) {}

HostAction Host::plan_next(const HostContext& ctx, long* tokens_in, long* tokens_out) {
    if (context_entry_count(ctx) >= cfg_.step_limit) {
        throw EngineError(ErrorCode::PlanningFailed, "step limit already reached");
    }
    // The prompt is a function of (query, exchanges, capability lines,
    // template) and nothing else; worker and tool detail never reach it.
    std::string prompt = render_template(cfg_.plan_template,
                                         {{"query", ctx.query.text},
                                          {"exchanges", render_exchanges(ctx)},
                                          {"managers", registry_.capability_lines()}});
    CompletionRequest request;
    request.role = Role::HOST;
    request.transcript.push_back(Turn{"user", prompt});

    int failures = 0;
    while (true) {
        Completion completion = backend_.complete(request);
        if (tokens_in != nullptr) *tokens_in += completion.prompt_tokens;
        if (tokens_out != nullptr) *tokens_out += completion.completion_tokens;
        try {
            HostAction action = validate_host_action(completion.text, registry_.ids());
            if (action.kind == ActionKind::STEP) {
                action.directive->index = context_entry_count(ctx) + 1;
            }
            return action;
        } catch (const EngineError& e) {
            if (e.code() != ErrorCode::MalformedAction && e.code() != ErrorCode::UnknownManager) {
                throw;
            }
            ++failures;
            sink_.record(Actor::HOST, EventKind::WARNING, clock_.now(),
                         json{{"code", to_string(e.code())},
                              {"message", e.what()},
                              {"attempt", failures}});
            if (failures > cfg_.reprompt_limit) {
                throw EngineError(ErrorCode::PlanningFailed,
                                  std::string("no valid action after re-prompting: ") + e.what());
            }
            request.transcript.push_back(Turn{"assistant", completion.text});
            request.transcript.push_back(
                Turn{"user", std::string("Invalid action (") + e.what() +
                                 "). Reply with exactly one JSON action document: "
                                 "{\"kind\":\"STEP\",\"directive\":\"...\",\"manager\":\"...\"} "
                                 "or {\"kind\":\"STOP\"}."});
        }
    }
}

FinalAnswer Host::finalize(const HostContext& ctx, TerminationReason reason) {
    std::string prompt = render_template(
        cfg_.finalize_template,
        {{"query", ctx.query.text}, {"exchanges", render_exchanges(ctx)}});
    CompletionRequest request;
    request.role = Role::HOST;
    request.transcript.push_back(Turn{"user", prompt});
    Completion completion = backend_.complete(request);

    FinalAnswer answer;
    answer.text = completion.text;
    answer.steps_used = context_entry_count(ctx);
    answer.terminated_by = reason;
    sink_.record(Actor::HOST, EventKind::FINALIZE, clock_.now(),
                 json{{"task_id", ctx.query.task_id},
                      {"text", answer.text},
                      {"steps_used", answer.steps_used},
                      {"terminated_by", to_string(answer.terminated_by)},
                      {"step_limit", cfg_.step_limit},
                      {"clock", clock_.mode() == ClockMode::VIRTUAL ? "virtual" : "wall"}},
                 completion.prompt_tokens, completion.completion_tokens);
    return answer;
}

FinalAnswer Host::run_task(const TaskQuery& query) {
    if (registry_.empty()) {
        throw EngineError(ErrorCode::ConfigInvalid, "no managers registered");
    }
    if (trim(query.text).empty()) {
        throw EngineError(ErrorCode::ConfigInvalid, "task text is empty");
    }

    HostContext ctx{query, {}};
    TerminationReason reason = TerminationReason::STEP_LIMIT;
    try {
        for (int t = 1; t <= cfg_.step_limit; ++t) {
            long plan_in = 0, plan_out = 0;
            HostAction action = plan_next(ctx, &plan_in, &plan_out);
            if (action.kind == ActionKind::STOP) {
                sink_.record(Actor::HOST, EventKind::STOP, clock_.now(),
                             json{{"after_steps", context_entry_count(ctx)}}, plan_in, plan_out);
                reason = TerminationReason::STOP;
                break;
            }

            StepDirective directive = *action.directive;
            StepSummary summary;
            try {
                summary = registry_.at(action.manager_id).handle(directive);
            } catch (const EngineError& e) {
                if (e.code() != ErrorCode::StepFailed) throw;
                // Best effort: the step failed outright, the host still
                // gets a summary it can plan around.
                summary.text = std::string("Step failed: ") + e.what();
                summary.source_manager = action.manager_id;
                summary.subtask_count = 0;
            }

            ctx = append_exchange(ctx, directive, summary);
            json flags = json::array();
            for (const auto& flag : summary.escalation_flags) flags.push_back(flag);
            sink_.record(Actor::HOST, EventKind::STEP, clock_.now(),
                         json{{"index", directive.index},
                              {"directive", directive.text},
                              {"manager", action.manager_id},
                              {"summary", summary.text},
                              {"subtask_count", summary.subtask_count},
                              {"escalation_flags", flags}},
                         plan_in, plan_out);
        }
        return finalize(ctx, reason);
    } catch (const EngineError& e) {
        if (e.code() == ErrorCode::TaskFailed) throw;
        sink_.record(Actor::HOST, EventKind::ERROR, clock_.now(),
                     json{{"code", to_string(e.code())}, {"message", e.what()}});
        throw EngineError(ErrorCode::TaskFailed, e.what());
    }
}

} // namespace triad
