#include "triad/manager.hpp"
#include "triad/text.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

namespace triad {

using nlohmann::json;

Manager::Manager(ManagerConfig cfg, Backend& backend, SchedulerConfig scheduler,
                 WorkerInvoker invoker, TraceSink& sink, RunClock& clock)
    : cfg_(std::move(cfg)), backend_(backend), scheduler_(scheduler), invoker_(std::move(invoker)),
      sink_(sink), clock_(clock) {}

Completion Manager::complete_manager(const std::string& prompt) {
    CompletionRequest request;
    request.role = Role::MANAGER;
    request.transcript.push_back(Turn{"user", prompt});
    return backend_.complete(request);
}

namespace {

std::string render_results_block(const std::vector<SubtaskResult>& results) {
    std::ostringstream out;
    for (const auto& result : results) {
        out << "slot " << result.subtask.slot << " [" << to_string(result.status)
            << "]: " << result.text << "\n";
    }
    return out.str();
}

} // namespace

std::vector<Subtask> Manager::decompose(const StepDirective& directive, long* tokens_in,
                                        long* tokens_out, int* requested) {
    if (trim(directive.text).empty()) {
        throw EngineError(ErrorCode::DecompositionFailed, "empty directive");
    }
    std::string prompt = render_template(
        cfg_.decompose_template,
        {{"directive", directive.text}, {"cap", std::to_string(cfg_.decompose_cap)}});

    CompletionRequest request;
    request.role = Role::MANAGER;
    request.transcript.push_back(Turn{"user", prompt});

    std::vector<std::string> texts;
    for (int attempt = 0; attempt < 2; ++attempt) {
        Completion completion = backend_.complete(request);
        if (tokens_in != nullptr) *tokens_in += completion.prompt_tokens;
        if (tokens_out != nullptr) *tokens_out += completion.completion_tokens;
        try {
            json doc = json::parse(completion.text);
            for (const auto& item : doc.at("subtasks")) {
                std::string text = item.get<std::string>();
                if (!trim(text).empty()) texts.push_back(text);
            }
        } catch (const json::exception&) {
            texts.clear();
        }
        if (!texts.empty()) break;
        // One re-prompt before giving up.
        request.transcript.push_back(Turn{"assistant", completion.text});
        request.transcript.push_back(
            Turn{"user", "That was not a valid subtask list document. Reply with exactly one "
                         "JSON object of the form {\"subtasks\": [\"...\", ...]} and nothing else."});
    }
    if (texts.empty()) {
        throw EngineError(ErrorCode::DecompositionFailed,
                          "no parseable subtask list for step " + std::to_string(directive.index));
    }
    if (requested != nullptr) *requested = (int)texts.size();

    // Dedup on normalized text, then cap. Slots stay contiguous.
    std::vector<Subtask> batch;
    std::set<std::string> seen;
    for (const auto& text : texts) {
        std::string norm = nfc_normalize(text);
        if (!seen.insert(norm).second) continue;
        if ((int)batch.size() >= cfg_.decompose_cap) break;
        Subtask subtask;
        subtask.text = text;
        subtask.step_index = directive.index;
        subtask.slot = (int)batch.size();
        subtask.revision = 0;
        batch.push_back(std::move(subtask));
    }
    return batch;
}

ReflectionRecord Manager::reflect(const StepDirective& directive,
                                  const std::vector<SubtaskResult>& results, int round,
                                  long* tokens_in, long* tokens_out, bool* parse_failed) {
    std::string prompt = render_template(cfg_.reflect_template,
                                         {{"directive", directive.text},
                                          {"results", render_results_block(results)},
                                          {"round", std::to_string(round)}});
    Completion completion = complete_manager(prompt);
    if (tokens_in != nullptr) *tokens_in += completion.prompt_tokens;
    if (tokens_out != nullptr) *tokens_out += completion.completion_tokens;
    if (parse_failed != nullptr) *parse_failed = false;

    ReflectionRecord record;
    record.round = round;
    int max_revision = 0;
    for (const auto& result : results) max_revision = std::max(max_revision, result.subtask.revision);

    try {
        json doc = json::parse(completion.text);
        record.rationale = doc.value("rationale", "");
        std::string status = doc.at("status").get<std::string>();
        if (status == "accept") return record;
        if (status != "revise") throw json::other_error::create(501, "bad status", nullptr);
        ReflectionVerdict verdict;
        verdict.status = VerdictStatus::REVISE;
        std::set<int> slots_seen;
        for (const auto& item : doc.at("replacements")) {
            int slot = item.at("slot").get<int>();
            std::string text = item.at("text").get<std::string>();
            if (slot < 0 || slot >= (int)results.size() || trim(text).empty() ||
                !slots_seen.insert(slot).second) {
                throw json::other_error::create(501, "bad replacement", nullptr);
            }
            Subtask replacement;
            replacement.text = text;
            replacement.step_index = directive.index;
            replacement.slot = slot;
            replacement.revision = max_revision + 1;
            verdict.replacements.push_back(std::move(replacement));
        }
        if (!verdict.replacements.empty()) record.verdict = verdict;
        return record;
    } catch (const json::exception&) {
        // Fail open: an unparseable reflection never blocks the step.
        if (parse_failed != nullptr) *parse_failed = true;
        record.verdict = ReflectionVerdict{};
        record.rationale.clear();
        return record;
    }
}

StepSummary Manager::aggregate(const StepDirective& directive,
                               const std::vector<SubtaskResult>& results, long* tokens_in,
                               long* tokens_out) {
    int ok_count = 0;
    std::ostringstream block;
    for (const auto& result : results) {
        if (result.status == SubtaskStatus::OK) {
            ++ok_count;
            block << "slot " << result.subtask.slot << ": " << result.text << "\n";
        } else {
            // Failed slots surface as notes only; their texts never feed
            // the summary body.
            block << "slot " << result.subtask.slot << ": FAILED (" << to_string(result.status)
                  << ")\n";
        }
    }
    if (ok_count == 0) {
        throw EngineError(ErrorCode::StepFailed,
                          "step " + std::to_string(directive.index) +
                              ": zero OK results after the reflect loop");
    }

    std::string prompt = render_template(
        cfg_.aggregate_template, {{"directive", directive.text}, {"results", block.str()}});
    Completion completion = complete_manager(prompt);
    if (tokens_in != nullptr) *tokens_in += completion.prompt_tokens;
    if (tokens_out != nullptr) *tokens_out += completion.completion_tokens;

    StepSummary summary;
    summary.text = completion.text;
    summary.source_manager = cfg_.manager_id;
    summary.subtask_count = ok_count;
    for (const auto& marker : cfg_.escalation_markers) {
        std::string needle = "[" + marker + "]";
        for (const auto& result : results) {
            if (result.text.find(needle) != std::string::npos) {
                summary.escalation_flags.insert(marker);
                break;
            }
        }
    }
    return summary;
}

StepSummary Manager::handle_step(const StepDirective& directive) {
    const int step = directive.index;

    long decompose_in = 0, decompose_out = 0;
    int requested = 0;
    std::vector<Subtask> batch = decompose(directive, &decompose_in, &decompose_out, &requested);
    sink_.record(Actor::MANAGER, EventKind::DECOMPOSE, clock_.now(),
                 json{{"step", step},
                      {"directive", directive.text},
                      {"count", (int)batch.size()},
                      {"requested", requested},
                      {"reflect_limit", cfg_.reflect_limit},
                      {"manager", cfg_.manager_id}},
                 decompose_in, decompose_out);
    if (requested > (int)batch.size()) {
        sink_.record(Actor::MANAGER, EventKind::WARNING, clock_.now(),
                     json{{"code", "BatchTruncated"},
                          {"message", std::to_string(requested) + " subtasks requested, kept " +
                                          std::to_string(batch.size())},
                          {"step", step}});
    }

    std::map<int, SubtaskResult> results_by_slot;
    std::vector<Subtask> current = batch;
    double step_makespan = 0.0;
    bool forced_accept = false;
    int round = 1;

    while (true) {
        // Outcomes keyed by slot; the runner stores them so tool events can
        // be replayed into the trace in deterministic (finish, slot) order.
        std::map<int, WorkerOutcome> outcomes;
        std::mutex outcomes_mutex;
        SubtaskRunner runner = [&](const Subtask& subtask, const WorkerDeadline& deadline) {
            WorkerOutcome outcome = invoker_(subtask, deadline);
            SubtaskResult result = outcome.result;
            {
                std::lock_guard<std::mutex> lock(outcomes_mutex);
                outcomes[subtask.slot] = std::move(outcome);
            }
            return result;
        };

        const double wave_epoch = clock_.now();
        WaveResult wave = execute_wave(current, scheduler_, runner);

        // Emit per-slot events ordered by (finish, slot).
        std::vector<size_t> order(current.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            if (wave.timing[a].finish != wave.timing[b].finish) {
                return wave.timing[a].finish < wave.timing[b].finish;
            }
            return current[a].slot < current[b].slot;
        });
        for (size_t idx : order) {
            const Subtask& subtask = current[idx];
            const SubtaskResult& result = wave.results[idx];
            const WorkerOutcome& outcome = outcomes.at(subtask.slot);
            const double finish_time = wave_epoch + wave.timing[idx].finish;
            for (const auto& diagnostic : outcome.diagnostics) {
                sink_.record(Actor::WORKER,
                             diagnostic.is_error ? EventKind::ERROR : EventKind::WARNING,
                             finish_time,
                             json{{"code", diagnostic.code},
                                  {"message", diagnostic.message},
                                  {"step", step},
                                  {"slot", subtask.slot},
                                  {"revision", subtask.revision}});
            }
            for (const auto& exchange : outcome.exchanges) {
                sink_.record(Actor::WORKER, EventKind::TOOL_CALL, finish_time,
                             json{{"step", step},
                                  {"slot", subtask.slot},
                                  {"revision", subtask.revision},
                                  {"call_index", exchange.call.call_index},
                                  {"tool", exchange.call.tool_name},
                                  {"arguments", exchange.call.arguments}});
                sink_.record(Actor::TOOL, EventKind::TOOL_RESULT, finish_time,
                             json{{"step", step},
                                  {"slot", subtask.slot},
                                  {"revision", subtask.revision},
                                  {"call_index", exchange.call.call_index},
                                  {"is_error", exchange.result.is_error},
                                  {"payload", exchange.result.payload}});
            }
            sink_.record(Actor::WORKER, EventKind::EXECUTE, finish_time,
                         json{{"step", step},
                              {"slot", subtask.slot},
                              {"revision", subtask.revision},
                              {"status", to_string(result.status)},
                              {"duration", result.duration},
                              {"start", wave_epoch + wave.timing[idx].start},
                              {"finish", finish_time},
                              {"tool_calls", result.tool_call_count},
                              {"text", result.text},
                              {"worker_trace", outcome.trace_relpath}},
                         outcome.tokens_in, outcome.tokens_out);
        }

        clock_.advance(wave.makespan);
        step_makespan += wave.makespan;
        for (size_t i = 0; i < current.size(); ++i) {
            results_by_slot[current[i].slot] = wave.results[i];
        }

        std::vector<SubtaskResult> snapshot;
        snapshot.reserve(results_by_slot.size());
        for (const auto& [slot, result] : results_by_slot) {
            (void)slot;
            snapshot.push_back(result);
        }

        long reflect_in = 0, reflect_out = 0;
        bool parse_failed = false;
        ReflectionRecord record =
            reflect(directive, snapshot, round, &reflect_in, &reflect_out, &parse_failed);
        const ReflectionVerdict& verdict = record.verdict;
        forced_accept = verdict.status == VerdictStatus::REVISE && round >= cfg_.reflect_limit;
        json replaced = json::array();
        for (const auto& replacement : verdict.replacements) replaced.push_back(replacement.slot);
        sink_.record(Actor::MANAGER, EventKind::REFLECT, clock_.now(),
                     json{{"step", step},
                          {"round", record.round},
                          {"verdict",
                           verdict.status == VerdictStatus::ACCEPT ? "accept" : "revise"},
                          {"replaced_slots",
                           forced_accept ? json::array() : replaced},
                          {"forced", forced_accept},
                          {"rationale", record.rationale}},
                     reflect_in, reflect_out);
        if (parse_failed) {
            sink_.record(Actor::MANAGER, EventKind::WARNING, clock_.now(),
                         json{{"code", "ReflectionUnparseable"},
                              {"message", "reflection reply defaulted to accept"},
                              {"step", step}});
        }
        if (verdict.status == VerdictStatus::ACCEPT || forced_accept) break;

        current = verdict.replacements;
        ++round;
    }

    long aggregate_in = 0, aggregate_out = 0;
    std::vector<SubtaskResult> ordered;
    ordered.reserve(results_by_slot.size());
    for (const auto& [slot, result] : results_by_slot) {
        (void)slot;
        ordered.push_back(result);
    }
    StepSummary summary;
    try {
        summary = aggregate(directive, ordered, &aggregate_in, &aggregate_out);
    } catch (const EngineError& e) {
        if (e.code() == ErrorCode::StepFailed) {
            sink_.record(Actor::MANAGER, EventKind::ERROR, clock_.now(),
                         json{{"code", "StepFailed"}, {"message", e.what()}, {"step", step}});
        }
        throw;
    }
    if (forced_accept) summary.escalation_flags.insert(kReflectLimitFlag);

    json flags = json::array();
    for (const auto& flag : summary.escalation_flags) flags.push_back(flag);
    int failed_count = (int)ordered.size() - summary.subtask_count;
    sink_.record(Actor::MANAGER, EventKind::AGGREGATE, clock_.now(),
                 json{{"step", step},
                      {"summary", summary.text},
                      {"ok_count", summary.subtask_count},
                      {"failed_count", failed_count},
                      {"makespan", step_makespan},
                      {"escalation_flags", flags},
                      {"manager", cfg_.manager_id}},
                 aggregate_in, aggregate_out);
    return summary;
}

} // namespace triad
