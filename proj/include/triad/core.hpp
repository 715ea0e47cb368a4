#pragma once
// Core domain types shared by every tier, plus the host-context algebra.
//
// All types here are plain values, immutable after construction by
// convention: append_exchange returns a new context instead of mutating,
// so contexts can cross thread boundaries without locks.

#include "triad/errors.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace triad {

struct Attachment {
    std::string name;
    std::string uri;
};

struct TaskQuery {
    std::string text;    // non-empty after trimming
    std::string task_id; // unique within one engine run
    std::vector<Attachment> attachments;
};

struct StepDirective {
    std::string text;
    int index = 0; // step ordinal, 1-based
};

struct StepSummary {
    std::string text;
    std::string source_manager;
    int subtask_count = 0; // number of OK results that produced it
    std::set<std::string> escalation_flags;
};

struct Exchange {
    StepDirective directive;
    StepSummary summary;
};

// The only state the host reasons over: the initial query plus the ordered
// step/summary exchanges. Carries no tool payloads and no subtask texts.
struct HostContext {
    TaskQuery query;
    std::vector<Exchange> exchanges;
};

enum class ActionKind { STEP, STOP };

struct HostAction {
    ActionKind kind = ActionKind::STOP;
    std::optional<StepDirective> directive; // present iff kind == STEP
    std::string manager_id;                 // present iff kind == STEP
};

struct Subtask {
    std::string text;
    int step_index = 0;
    int slot = 0;     // 0-based position within the batch
    int revision = 0; // bumped by reflect replacements
};

enum class SubtaskStatus { OK, TOOL_ERROR, TIMEOUT };

const char* to_string(SubtaskStatus status);
SubtaskStatus subtask_status_from_string(const std::string& s);

struct SubtaskResult {
    Subtask subtask;
    SubtaskStatus status = SubtaskStatus::OK;
    std::string text;
    int tool_call_count = 0;
    double duration = 0.0; // seconds, virtual or wall
};

enum class VerdictStatus { ACCEPT, REVISE };

struct ReflectionVerdict {
    VerdictStatus status = VerdictStatus::ACCEPT;
    std::vector<Subtask> replacements; // non-empty iff status == REVISE
};

enum class TerminationReason { STOP, STEP_LIMIT };

const char* to_string(TerminationReason reason);

struct FinalAnswer {
    std::string text;
    int steps_used = 0;
    TerminationReason terminated_by = TerminationReason::STOP;
};

// Context update: Ĉ_t = Ĉ_{t-1} plus one (directive, summary) pair.
// The directive index must be exactly one past the current entry count;
// anything else throws IndexGap. Prior entries are copied untouched.
HostContext append_exchange(const HostContext& ctx, const StepDirective& directive,
                            const StepSummary& summary);

int context_entry_count(const HostContext& ctx);

// Parses a backend completion into a HostAction. The action document is a
// single JSON object {"kind": "STEP"|"STOP", "directive": ..., "manager": ...};
// trailing garbage is rejected. STEP actions must name a registered manager.
HostAction validate_host_action(const std::string& raw, const std::set<std::string>& registry);

} // namespace triad
