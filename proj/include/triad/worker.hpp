#pragma once
// Worker tier: one subtask, a multi-turn tool loop over the MCP client,
// a single result upward. Full tool payloads stay in the worker-local
// trace file; the manager only ever sees the final text.

#include "triad/backends.hpp"
#include "triad/core.hpp"
#include "triad/mcp.hpp"
#include "triad/scheduler.hpp"

#include <string>
#include <vector>

namespace triad {

struct WorkerConfig {
    int max_tool_turns = 12;
    int tool_retry_limit = 3; // consecutive failed calls before giving up
    std::string prompt_template; // system prompt text, {tools} placeholder
};

struct ToolExchange {
    ToolCall call;
    ToolResult result;
};

struct WorkerDiagnostic {
    bool is_error = false; // otherwise a warning
    std::string code;
    std::string message;
};

struct WorkerOutcome {
    SubtaskResult result;
    std::vector<ToolExchange> exchanges;
    std::vector<WorkerDiagnostic> diagnostics;
    std::string trace_relpath; // {task_id}/{step}/{slot}.{revision}.trace
    long tokens_in = 0;
    long tokens_out = 0;
};

// The tool-call document the worker backend emits: a single JSON object
// {"tool": name, "arguments": {...}}. Anything unparseable is final text.
bool parse_tool_call(const std::string& completion_text, ToolCall& out);

// Runs the completion/tool loop for one subtask. Tool calls are bounded by
// max_tool_turns; a call failing more than tool_retry_limit consecutive
// times yields TOOL_ERROR; an expired deadline yields TIMEOUT with
// whatever text accumulated. Never throws for per-subtask failures.
WorkerOutcome run_subtask(const WorkerConfig& cfg, const Subtask& subtask, ToolClient& tools,
                          Backend& backend, const std::string& task_id,
                          const std::string& worker_trace_root,
                          const WorkerDeadline& deadline = {});

} // namespace triad
