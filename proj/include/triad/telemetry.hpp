#pragma once
// Append-only event trace plus the accounting built on it.
//
// One JSON object per line, UTF-8, keys in fixed (alphabetical) order, so
// traces from deterministic runs diff cleanly. The sink assigns sequence
// numbers and refuses regressions in seq or time. Wall timestamps and
// worker-trace roots are the only nondeterministic fields; masking them is
// part of the format contract (see mask_times).

#include "triad/core.hpp"
#include "triad/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace triad {

enum class Actor { HOST, MANAGER, WORKER, SCHEDULER, TOOL };
enum class EventKind {
    STEP,
    STOP,
    DECOMPOSE,
    EXECUTE,
    REFLECT,
    AGGREGATE,
    TOOL_CALL,
    TOOL_RESULT,
    FINALIZE,
    WARNING,
    ERROR
};

const char* to_string(Actor actor);
const char* to_string(EventKind kind);
Actor actor_from_string(const std::string& s);
EventKind event_kind_from_string(const std::string& s);

struct TraceEvent {
    long seq = 0;
    double time = 0.0; // seconds, virtual or wall (since run start)
    Actor actor = Actor::HOST;
    EventKind kind = EventKind::WARNING;
    nlohmann::json payload;
    long tokens_in = 0;
    long tokens_out = 0;

    nlohmann::json to_json() const;
    std::string to_line() const;
    static TraceEvent from_json(const nlohmann::json& doc);
};

// Totally orders events; optionally mirrors them to a JSONL file, flushed
// per event so a crashed run leaves a usable partial trace.
class TraceSink {
public:
    TraceSink() = default;
    explicit TraceSink(const std::string& path);

    // Assigns the next seq. Returns the recorded event's seq.
    long record(Actor actor, EventKind kind, double time, nlohmann::json payload,
                long tokens_in = 0, long tokens_out = 0);

    // Replay path: the event must already carry seq = previous + 1.
    void append(const TraceEvent& event);

    std::vector<TraceEvent> events() const;
    const std::string& path() const { return path_; }

private:
    void write_line(const TraceEvent& event);
    void check_order(const TraceEvent& event) const;

    mutable std::mutex mutex_;
    std::vector<TraceEvent> events_;
    std::ofstream file_;
    std::string path_;
    long next_seq_ = 0;
    double last_time_ = 0.0;
};

std::vector<TraceEvent> load_trace(const std::string& path); // TruncatedTrace on empty/garbled

struct RoleTokens {
    long tokens_in = 0;
    long tokens_out = 0;
};

struct RunMetrics {
    int total_steps = 0;
    int total_subtasks = 0;
    int total_tool_calls = 0;
    std::vector<double> step_makespans; // one entry per step, step order
    std::map<std::string, RoleTokens> tokens_by_actor;
    long total_tokens_in = 0;
    long total_tokens_out = 0;

    nlohmann::json to_json() const;
    std::string to_table() const;
};

// Requires a complete trace (FINALIZE present); TruncatedTrace otherwise.
RunMetrics summarize(const std::vector<TraceEvent>& events);

// Timing-model ratio over the recorded per-subtask durations:
//   sum over steps of makespan(step, baseline_budget)
//   -------------------------------------------------
//   sum over steps of makespan(step, budget)
// MissingDurations if the trace has no EXECUTE durations to work from.
double compute_speedup(const std::vector<TraceEvent>& events, int baseline_budget, int budget);

// Rebuilds the host-visible exchanges from STEP events (replay support).
std::vector<Exchange> rebuild_exchanges(const std::vector<TraceEvent>& events);

struct Violation {
    std::string rule;
    std::string detail;
};

// Re-checks the trace-level invariants: seq contiguity, monotone time,
// per-step event algebra, map/reduce ordering, host/tool separation, and
// sentinel isolation (tokens matching SNTL_<id> found in tool payloads must
// not reach host-level texts).
std::vector<Violation> verify_trace(const std::vector<TraceEvent>& events);

// Canonical lines for diffing: wall times zeroed when mask_time is set.
std::vector<std::string> canonical_lines(const std::vector<TraceEvent>& events, bool mask_time);

} // namespace triad
