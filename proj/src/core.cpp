#include "triad/core.hpp"
#include "triad/text.hpp"

#include <json.hpp>

namespace triad {

using nlohmann::json;

const char* to_string(SubtaskStatus status) {
    switch (status) {
        case SubtaskStatus::OK:         return "OK";
        case SubtaskStatus::TOOL_ERROR: return "TOOL_ERROR";
        case SubtaskStatus::TIMEOUT:    return "TIMEOUT";
    }
    return "OK";
}

SubtaskStatus subtask_status_from_string(const std::string& s) {
    if (s == "TOOL_ERROR") return SubtaskStatus::TOOL_ERROR;
    if (s == "TIMEOUT") return SubtaskStatus::TIMEOUT;
    return SubtaskStatus::OK;
}

const char* to_string(TerminationReason reason) {
    return reason == TerminationReason::STOP ? "STOP" : "STEP_LIMIT";
}

HostContext append_exchange(const HostContext& ctx, const StepDirective& directive,
                            const StepSummary& summary) {
    int expected = (int)ctx.exchanges.size() + 1;
    if (directive.index != expected) {
        throw EngineError(ErrorCode::IndexGap,
                          "directive index " + std::to_string(directive.index) +
                              ", expected " + std::to_string(expected));
    }
    HostContext next = ctx;
    next.exchanges.push_back(Exchange{directive, summary});
    return next;
}

int context_entry_count(const HostContext& ctx) {
    return (int)ctx.exchanges.size();
}

HostAction validate_host_action(const std::string& raw, const std::set<std::string>& registry) {
    json doc;
    try {
        // json::parse over the full string rejects trailing garbage.
        doc = json::parse(raw);
    } catch (const json::exception& e) {
        throw EngineError(ErrorCode::MalformedAction, e.what());
    }
    if (!doc.is_object() || !doc.contains("kind") || !doc["kind"].is_string()) {
        throw EngineError(ErrorCode::MalformedAction, "missing string field 'kind'");
    }
    std::string kind = doc["kind"].get<std::string>();
    if (kind == "STOP") {
        return HostAction{ActionKind::STOP, std::nullopt, ""};
    }
    if (kind != "STEP") {
        throw EngineError(ErrorCode::MalformedAction, "kind must be STEP or STOP, got: " + kind);
    }
    if (!doc.contains("directive") || !doc["directive"].is_string() ||
        trim(doc["directive"].get<std::string>()).empty()) {
        throw EngineError(ErrorCode::MalformedAction, "STEP action needs a non-empty 'directive'");
    }
    if (!doc.contains("manager") || !doc["manager"].is_string()) {
        throw EngineError(ErrorCode::MalformedAction, "STEP action needs a 'manager' id");
    }
    std::string manager = doc["manager"].get<std::string>();
    if (registry.find(manager) == registry.end()) {
        throw EngineError(ErrorCode::UnknownManager, manager);
    }
    HostAction action;
    action.kind = ActionKind::STEP;
    action.directive = StepDirective{doc["directive"].get<std::string>(), 0};
    action.manager_id = manager;
    return action;
}

} // namespace triad
