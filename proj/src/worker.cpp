#include "triad/worker.hpp"
#include "triad/telemetry.hpp"
#include "triad/text.hpp"

#include <filesystem>
#include <fstream>

namespace triad {

using nlohmann::json;

bool parse_tool_call(const std::string& completion_text, ToolCall& out) {
    json doc;
    try {
        doc = json::parse(completion_text);
    } catch (const json::exception&) {
        return false;
    }
    if (!doc.is_object() || !doc.contains("tool") || !doc["tool"].is_string()) return false;
    out.tool_name = doc["tool"].get<std::string>();
    out.arguments = doc.value("arguments", json::object());
    return true;
}

namespace {

// Spills the tool exchange to the per-subtask trace file, one telemetry
// encoded event per line. Local seq/time, not the run trace's.
class LocalTrace {
public:
    LocalTrace(const std::string& root, const std::string& relpath) {
        if (root.empty()) return;
        std::filesystem::path full = std::filesystem::path(root) / relpath;
        std::filesystem::create_directories(full.parent_path());
        file_.open(full, std::ios::binary | std::ios::trunc);
    }

    void record(Actor actor, EventKind kind, json payload) {
        if (!file_.is_open()) return;
        TraceEvent event;
        event.seq = seq_++;
        event.time = 0.0;
        event.actor = actor;
        event.kind = kind;
        event.payload = std::move(payload);
        file_ << event.to_line() << '\n';
        file_.flush();
    }

private:
    std::ofstream file_;
    long seq_ = 0;
};

std::string make_relpath(const std::string& task_id, const Subtask& subtask) {
    return task_id + "/" + std::to_string(subtask.step_index) + "/" +
           std::to_string(subtask.slot) + "." + std::to_string(subtask.revision) + ".trace";
}

} // namespace

WorkerOutcome run_subtask(const WorkerConfig& cfg, const Subtask& subtask, ToolClient& tools,
                          Backend& backend, const std::string& task_id,
                          const std::string& worker_trace_root, const WorkerDeadline& deadline) {
    WorkerOutcome outcome;
    outcome.result.subtask = subtask;
    outcome.trace_relpath = make_relpath(task_id, subtask);
    LocalTrace local(worker_trace_root, outcome.trace_relpath);

    CompletionRequest request;
    request.role = Role::WORKER;
    request.system_prompt = cfg.prompt_template;
    request.transcript.push_back(Turn{"user", subtask.text});

    auto finish = [&](SubtaskStatus status, std::string text) {
        outcome.result.status = status;
        outcome.result.text = std::move(text);
        outcome.result.tool_call_count = (int)outcome.exchanges.size();
        return outcome;
    };

    std::string last_assistant_text;
    int turns = 0;
    int consecutive_failures = 0;

    while (true) {
        if (deadline.expired()) {
            return finish(SubtaskStatus::TIMEOUT, last_assistant_text);
        }
        if (turns >= cfg.max_tool_turns) {
            outcome.diagnostics.push_back(
                {false, "TurnBudgetExhausted",
                 "no final text after " + std::to_string(turns) + " turns"});
            return finish(SubtaskStatus::TOOL_ERROR,
                          "worker exhausted its tool turn budget without a final answer");
        }

        Completion completion;
        try {
            completion = backend.complete(request);
        } catch (const EngineError& e) {
            outcome.diagnostics.push_back({true, to_string(e.code()), e.what()});
            return finish(SubtaskStatus::TOOL_ERROR, std::string("backend failure: ") + e.what());
        }
        ++turns;
        outcome.tokens_in += completion.prompt_tokens;
        outcome.tokens_out += completion.completion_tokens;
        request.transcript.push_back(Turn{"assistant", completion.text});
        last_assistant_text = completion.text;

        ToolCall call;
        if (!parse_tool_call(completion.text, call)) {
            std::string text = trim(completion.text);
            if (text.empty()) {
                outcome.diagnostics.push_back({false, "EmptyCompletion", "backend returned no text"});
                return finish(SubtaskStatus::TOOL_ERROR, "backend returned an empty completion");
            }
            return finish(SubtaskStatus::OK, completion.text);
        }

        // One tool call requested; retry in place on failures, each attempt
        // counts against the turn budget's call cap.
        while (true) {
            if (deadline.expired()) {
                return finish(SubtaskStatus::TIMEOUT, last_assistant_text);
            }
            if ((int)outcome.exchanges.size() >= cfg.max_tool_turns) {
                outcome.diagnostics.push_back(
                    {false, "TurnBudgetExhausted",
                     "tool call cap hit at " + std::to_string(outcome.exchanges.size())});
                return finish(SubtaskStatus::TOOL_ERROR,
                              "worker exhausted its tool call budget without a final answer");
            }
            call.call_index = (int)outcome.exchanges.size();
            ToolResult result;
            try {
                result = tools.call_tool(call.tool_name, call.arguments);
            } catch (const EngineError& e) {
                result.is_error = true;
                result.payload = std::string(e.what());
            }
            local.record(Actor::WORKER, EventKind::TOOL_CALL,
                         json{{"call_index", call.call_index},
                              {"tool", call.tool_name},
                              {"arguments", call.arguments}});
            local.record(Actor::TOOL, EventKind::TOOL_RESULT,
                         json{{"call_index", call.call_index},
                              {"is_error", result.is_error},
                              {"payload", result.payload}});
            outcome.exchanges.push_back(ToolExchange{call, result});

            if (result.is_error) {
                ++consecutive_failures;
                if (consecutive_failures > cfg.tool_retry_limit) {
                    return finish(SubtaskStatus::TOOL_ERROR,
                                  "tool " + call.tool_name + " failed after " +
                                      std::to_string(consecutive_failures) + " attempts: " +
                                      result.text());
                }
                continue;
            }
            consecutive_failures = 0;
            request.transcript.push_back(Turn{"tool", result.text()});
            break;
        }
    }
}

} // namespace triad
