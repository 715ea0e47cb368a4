#include "triad/telemetry.hpp"
#include "triad/scheduler.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace triad {

using nlohmann::json;

const char* to_string(Actor actor) {
    switch (actor) {
        case Actor::HOST:      return "HOST";
        case Actor::MANAGER:   return "MANAGER";
        case Actor::WORKER:    return "WORKER";
        case Actor::SCHEDULER: return "SCHEDULER";
        case Actor::TOOL:      return "TOOL";
    }
    return "HOST";
}

const char* to_string(EventKind kind) {
    switch (kind) {
        case EventKind::STEP:        return "STEP";
        case EventKind::STOP:        return "STOP";
        case EventKind::DECOMPOSE:   return "DECOMPOSE";
        case EventKind::EXECUTE:     return "EXECUTE";
        case EventKind::REFLECT:     return "REFLECT";
        case EventKind::AGGREGATE:   return "AGGREGATE";
        case EventKind::TOOL_CALL:   return "TOOL_CALL";
        case EventKind::TOOL_RESULT: return "TOOL_RESULT";
        case EventKind::FINALIZE:    return "FINALIZE";
        case EventKind::WARNING:     return "WARNING";
        case EventKind::ERROR:       return "ERROR";
    }
    return "WARNING";
}

Actor actor_from_string(const std::string& s) {
    if (s == "HOST") return Actor::HOST;
    if (s == "MANAGER") return Actor::MANAGER;
    if (s == "WORKER") return Actor::WORKER;
    if (s == "SCHEDULER") return Actor::SCHEDULER;
    if (s == "TOOL") return Actor::TOOL;
    throw EngineError(ErrorCode::TruncatedTrace, "unknown actor: " + s);
}

EventKind event_kind_from_string(const std::string& s) {
    static const std::map<std::string, EventKind> table = {
        {"STEP", EventKind::STEP},           {"STOP", EventKind::STOP},
        {"DECOMPOSE", EventKind::DECOMPOSE}, {"EXECUTE", EventKind::EXECUTE},
        {"REFLECT", EventKind::REFLECT},     {"AGGREGATE", EventKind::AGGREGATE},
        {"TOOL_CALL", EventKind::TOOL_CALL}, {"TOOL_RESULT", EventKind::TOOL_RESULT},
        {"FINALIZE", EventKind::FINALIZE},   {"WARNING", EventKind::WARNING},
        {"ERROR", EventKind::ERROR},
    };
    auto it = table.find(s);
    if (it == table.end()) throw EngineError(ErrorCode::TruncatedTrace, "unknown event kind: " + s);
    return it->second;
}

json TraceEvent::to_json() const {
    return json{{"seq", seq},
                {"time", time},
                {"actor", to_string(actor)},
                {"kind", to_string(kind)},
                {"payload", payload},
                {"tokens_in", tokens_in},
                {"tokens_out", tokens_out}};
}

std::string TraceEvent::to_line() const { return to_json().dump(); }

TraceEvent TraceEvent::from_json(const json& doc) {
    TraceEvent event;
    try {
        event.seq = doc.at("seq").get<long>();
        event.time = doc.at("time").get<double>();
        event.actor = actor_from_string(doc.at("actor").get<std::string>());
        event.kind = event_kind_from_string(doc.at("kind").get<std::string>());
        event.payload = doc.at("payload");
        event.tokens_in = doc.at("tokens_in").get<long>();
        event.tokens_out = doc.at("tokens_out").get<long>();
    } catch (const json::exception& e) {
        throw EngineError(ErrorCode::TruncatedTrace, std::string("bad event record: ") + e.what());
    }
    return event;
}

TraceSink::TraceSink(const std::string& path) : path_(path) {
    file_.open(path, std::ios::binary | std::ios::trunc);
    if (!file_) throw EngineError(ErrorCode::SinkUnavailable, "cannot open trace file: " + path);
}

void TraceSink::check_order(const TraceEvent& event) const {
    if (event.seq != next_seq_) {
        throw EngineError(ErrorCode::SinkUnavailable,
                          "out-of-order seq " + std::to_string(event.seq) + ", expected " +
                              std::to_string(next_seq_));
    }
    if (!events_.empty() && event.time < last_time_) {
        throw EngineError(ErrorCode::SinkUnavailable,
                          "time regression at seq " + std::to_string(event.seq));
    }
}

void TraceSink::write_line(const TraceEvent& event) {
    if (!path_.empty()) {
        file_ << event.to_line() << '\n';
        file_.flush();
        if (!file_) throw EngineError(ErrorCode::SinkUnavailable, "trace write failed: " + path_);
    }
}

long TraceSink::record(Actor actor, EventKind kind, double time, json payload, long tokens_in,
                       long tokens_out) {
    std::lock_guard<std::mutex> lock(mutex_);
    TraceEvent event;
    event.seq = next_seq_;
    event.time = time;
    event.actor = actor;
    event.kind = kind;
    event.payload = std::move(payload);
    event.tokens_in = tokens_in;
    event.tokens_out = tokens_out;
    check_order(event);
    write_line(event);
    last_time_ = event.time;
    events_.push_back(std::move(event));
    ++next_seq_;
    return next_seq_ - 1;
}

void TraceSink::append(const TraceEvent& event) {
    std::lock_guard<std::mutex> lock(mutex_);
    check_order(event);
    write_line(event);
    last_time_ = event.time;
    events_.push_back(event);
    ++next_seq_;
}

std::vector<TraceEvent> TraceSink::events() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return events_;
}

std::vector<TraceEvent> load_trace(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw EngineError(ErrorCode::TruncatedTrace, "cannot open trace: " + path);
    std::vector<TraceEvent> events;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json doc;
        try {
            doc = json::parse(line);
        } catch (const json::exception& e) {
            throw EngineError(ErrorCode::TruncatedTrace,
                              "line " + std::to_string(events.size() + 1) + ": " + e.what());
        }
        events.push_back(TraceEvent::from_json(doc));
    }
    if (events.empty()) throw EngineError(ErrorCode::TruncatedTrace, "trace is empty: " + path);
    return events;
}

json RunMetrics::to_json() const {
    json by_actor = json::object();
    for (const auto& [actor, tokens] : tokens_by_actor) {
        by_actor[actor] = {{"tokens_in", tokens.tokens_in}, {"tokens_out", tokens.tokens_out}};
    }
    return json{{"total_steps", total_steps},
                {"total_subtasks", total_subtasks},
                {"total_tool_calls", total_tool_calls},
                {"step_makespans", step_makespans},
                {"tokens_by_actor", by_actor},
                {"total_tokens_in", total_tokens_in},
                {"total_tokens_out", total_tokens_out}};
}

std::string RunMetrics::to_table() const {
    std::ostringstream out;
    out << "steps          " << total_steps << "\n";
    out << "subtasks       " << total_subtasks << "\n";
    out << "tool calls     " << total_tool_calls << "\n";
    out << "step makespans ";
    for (size_t i = 0; i < step_makespans.size(); ++i) {
        if (i) out << ", ";
        out << step_makespans[i];
    }
    out << "\n";
    for (const auto& [actor, tokens] : tokens_by_actor) {
        out << "tokens " << actor;
        for (size_t i = actor.size(); i < 8; ++i) out << ' ';
        out << tokens.tokens_in << " in / " << tokens.tokens_out << " out\n";
    }
    out << "tokens total   " << total_tokens_in << " in / " << total_tokens_out << " out\n";
    return out.str();
}

RunMetrics summarize(const std::vector<TraceEvent>& events) {
    bool finalized = false;
    RunMetrics metrics;
    std::map<int, double> makespans_by_step;
    for (const auto& event : events) {
        metrics.total_tokens_in += event.tokens_in;
        metrics.total_tokens_out += event.tokens_out;
        auto& role = metrics.tokens_by_actor[to_string(event.actor)];
        role.tokens_in += event.tokens_in;
        role.tokens_out += event.tokens_out;
        switch (event.kind) {
            case EventKind::STEP: metrics.total_steps++; break;
            case EventKind::EXECUTE: metrics.total_subtasks++; break;
            case EventKind::TOOL_CALL: metrics.total_tool_calls++; break;
            case EventKind::AGGREGATE:
                makespans_by_step[event.payload.value("step", 0)] =
                    event.payload.value("makespan", 0.0);
                break;
            case EventKind::FINALIZE: finalized = true; break;
            default: break;
        }
    }
    if (!finalized) {
        throw EngineError(ErrorCode::TruncatedTrace, "trace has no FINALIZE event");
    }
    for (const auto& [step, makespan] : makespans_by_step) {
        (void)step;
        metrics.step_makespans.push_back(makespan);
    }
    return metrics;
}

double compute_speedup(const std::vector<TraceEvent>& events, int baseline_budget, int budget) {
    std::map<int, DurationVector> durations_by_step;
    for (const auto& event : events) {
        if (event.kind != EventKind::EXECUTE) continue;
        if (!event.payload.contains("duration")) {
            throw EngineError(ErrorCode::MissingDurations,
                              "EXECUTE event at seq " + std::to_string(event.seq) +
                                  " has no duration");
        }
        durations_by_step[event.payload.value("step", 0)].push_back(
            event.payload["duration"].get<double>());
    }
    if (durations_by_step.empty()) {
        throw EngineError(ErrorCode::MissingDurations, "trace has no EXECUTE events");
    }
    double baseline_total = 0.0;
    double budget_total = 0.0;
    for (const auto& [step, durations] : durations_by_step) {
        (void)step;
        baseline_total += makespan_par(durations, baseline_budget);
        budget_total += makespan_par(durations, budget);
    }
    if (budget_total <= 0.0) return 1.0;
    return baseline_total / budget_total;
}

std::vector<Exchange> rebuild_exchanges(const std::vector<TraceEvent>& events) {
    std::vector<Exchange> exchanges;
    for (const auto& event : events) {
        if (event.kind != EventKind::STEP) continue;
        Exchange exchange;
        exchange.directive.text = event.payload.value("directive", "");
        exchange.directive.index = event.payload.value("index", 0);
        exchange.summary.text = event.payload.value("summary", "");
        exchange.summary.source_manager = event.payload.value("manager", "");
        exchange.summary.subtask_count = event.payload.value("subtask_count", 0);
        if (event.payload.contains("escalation_flags")) {
            for (const auto& flag : event.payload["escalation_flags"]) {
                exchange.summary.escalation_flags.insert(flag.get<std::string>());
            }
        }
        exchanges.push_back(std::move(exchange));
    }
    return exchanges;
}

namespace {

// Sentinel tokens are SNTL_ followed by alphanumerics; mock fixtures embed
// them in tool payloads so leaks past the manager boundary are detectable.
void collect_sentinels(const std::string& text, std::set<std::string>& out) {
    const std::string tag = "SNTL_";
    size_t pos = 0;
    while ((pos = text.find(tag, pos)) != std::string::npos) {
        size_t end = pos + tag.size();
        while (end < text.size() && (std::isalnum((unsigned char)text[end]) != 0)) ++end;
        if (end > pos + tag.size()) out.insert(text.substr(pos, end - pos));
        pos = end;
    }
}

struct StepEvents {
    const TraceEvent* decompose = nullptr;
    const TraceEvent* aggregate = nullptr;
    std::vector<const TraceEvent*> executes;
    std::vector<const TraceEvent*> reflects;
    bool failed = false;
    int extra_decomposes = 0;
};

} // namespace

std::vector<Violation> verify_trace(const std::vector<TraceEvent>& events) {
    std::vector<Violation> violations;
    auto flag = [&](const std::string& rule, const std::string& detail) {
        violations.push_back(Violation{rule, detail});
    };

    for (size_t i = 0; i < events.size(); ++i) {
        if (events[i].seq != (long)i) {
            flag("seq-contiguous", "event " + std::to_string(i) + " has seq " +
                                       std::to_string(events[i].seq));
            break;
        }
    }
    for (size_t i = 1; i < events.size(); ++i) {
        if (events[i].time < events[i - 1].time) {
            flag("time-monotone", "seq " + std::to_string(events[i].seq));
        }
    }

    std::map<int, StepEvents> steps;
    const TraceEvent* finalize = nullptr;
    int step_event_count = 0;
    std::set<std::string> sentinels;
    for (const auto& event : events) {
        int step = event.payload.is_object() ? event.payload.value("step", -1) : -1;
        switch (event.kind) {
            case EventKind::DECOMPOSE:
                if (steps[step].decompose != nullptr) steps[step].extra_decomposes++;
                else steps[step].decompose = &event;
                break;
            case EventKind::AGGREGATE:
                if (steps[step].aggregate != nullptr) flag("one-aggregate", "step " + std::to_string(step));
                else steps[step].aggregate = &event;
                break;
            case EventKind::EXECUTE: steps[step].executes.push_back(&event); break;
            case EventKind::REFLECT: steps[step].reflects.push_back(&event); break;
            case EventKind::ERROR:
                if (step >= 0 && event.payload.value("code", "") == "StepFailed") {
                    steps[step].failed = true;
                }
                break;
            case EventKind::STEP: step_event_count++; break;
            case EventKind::FINALIZE: finalize = &event; break;
            case EventKind::TOOL_CALL:
                if (event.actor == Actor::HOST) {
                    flag("host-never-calls-tools", "seq " + std::to_string(event.seq));
                }
                collect_sentinels(event.payload.dump(), sentinels);
                break;
            case EventKind::TOOL_RESULT:
                collect_sentinels(event.payload.dump(), sentinels);
                break;
            default: break;
        }
    }

    for (const auto& [step, bucket] : steps) {
        if (bucket.decompose == nullptr) {
            if (!bucket.executes.empty() || bucket.aggregate != nullptr) {
                flag("one-decompose", "step " + std::to_string(step) + " has no DECOMPOSE");
            }
            continue;
        }
        const std::string label = "step " + std::to_string(step);
        if (bucket.extra_decomposes > 0) flag("one-decompose", label + " has duplicates");
        if (bucket.aggregate == nullptr && !bucket.failed) {
            flag("one-aggregate", label + " has no AGGREGATE and no StepFailed error");
        }
        int reflect_limit = bucket.decompose->payload.value("reflect_limit", 1);
        if (bucket.reflects.empty() || (int)bucket.reflects.size() > reflect_limit) {
            flag("reflect-bounds", label + " has " + std::to_string(bucket.reflects.size()) +
                                       " REFLECT events, limit " + std::to_string(reflect_limit));
        }
        int decompose_count = bucket.decompose->payload.value("count", 0);
        int replaced = 0;
        for (const auto* reflect : bucket.reflects) {
            if (reflect->payload.contains("replaced_slots")) {
                replaced += (int)reflect->payload["replaced_slots"].size();
            }
        }
        int initial_executes = 0;
        for (const auto* execute : bucket.executes) {
            if (execute->payload.value("revision", 0) == 0) initial_executes++;
        }
        if (initial_executes != decompose_count) {
            flag("execute-count", label + ": " + std::to_string(initial_executes) +
                                      " initial EXECUTE events vs decompose count " +
                                      std::to_string(decompose_count));
        }
        if ((int)bucket.executes.size() != decompose_count + replaced) {
            flag("execute-count", label + ": " + std::to_string(bucket.executes.size()) +
                                      " EXECUTE events vs expected " +
                                      std::to_string(decompose_count + replaced));
        }
        for (const auto* execute : bucket.executes) {
            if (execute->seq <= bucket.decompose->seq) {
                flag("map-reduce-order", label + ": EXECUTE before DECOMPOSE");
            }
            if (bucket.aggregate != nullptr && execute->seq >= bucket.aggregate->seq) {
                flag("map-reduce-order", label + ": EXECUTE after AGGREGATE");
            }
        }
    }

    if (finalize != nullptr) {
        int steps_used = finalize->payload.value("steps_used", -1);
        int step_limit = finalize->payload.value("step_limit", 0);
        if (steps_used != step_event_count) {
            flag("step-count-law", "FINALIZE steps_used " + std::to_string(steps_used) + " vs " +
                                       std::to_string(step_event_count) + " STEP events");
        }
        if (step_event_count > step_limit) {
            flag("step-limit", std::to_string(step_event_count) + " STEP events exceed limit " +
                                   std::to_string(step_limit));
        }
    } else {
        flag("finalize-missing", "trace has no FINALIZE event");
    }

    if (!sentinels.empty()) {
        auto scan_host_text = [&](const std::string& where, const std::string& text) {
            for (const auto& sentinel : sentinels) {
                if (text.find(sentinel) != std::string::npos) {
                    flag("context-isolation", sentinel + " leaked into " + where);
                }
            }
        };
        for (const auto& event : events) {
            if (event.kind == EventKind::STEP) {
                scan_host_text("STEP directive", event.payload.value("directive", ""));
                scan_host_text("STEP summary", event.payload.value("summary", ""));
            } else if (event.kind == EventKind::FINALIZE) {
                scan_host_text("final answer", event.payload.value("text", ""));
            }
        }
    }

    return violations;
}

std::vector<std::string> canonical_lines(const std::vector<TraceEvent>& events, bool mask_time) {
    std::vector<std::string> lines;
    lines.reserve(events.size());
    for (const auto& event : events) {
        if (!mask_time) {
            lines.push_back(event.to_line());
            continue;
        }
        TraceEvent masked = event;
        masked.time = 0.0;
        if (masked.payload.is_object()) {
            for (const char* key : {"duration", "start", "finish", "makespan"}) {
                if (masked.payload.contains(key)) masked.payload[key] = 0.0;
            }
        }
        lines.push_back(masked.to_line());
    }
    return lines;
}

} // namespace triad
