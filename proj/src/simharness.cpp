#include "triad/simharness.hpp"
#include "triad/text.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <set>
#include <sstream>

namespace triad {

using nlohmann::json;
namespace fs = std::filesystem;

bool ScenarioReport::all_pass() const {
    return std::all_of(assertions.begin(), assertions.end(),
                       [](const AssertionOutcome& a) { return a.pass; });
}

namespace {

void check_keys(const json& doc, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, value] : doc.items()) {
        (void)value;
        if (allowed.find(key) == allowed.end()) {
            throw EngineError(ErrorCode::ScenarioInvalid, where + " has unknown key '" + key + "'");
        }
    }
}

const std::set<std::string> kAssertionKeys = {
    "steps",          "subtasks",        "wave_sizes",    "event_counts",
    "revised_slots",  "statuses",        "final_golden",  "final_sha256",
    "terminated_by",  "manager_sequence", "escalation_flags", "total_makespan",
    "avg_tool_calls_per_step", "error_codes", "ok_counts", "speedup",
    "sweep",          "verify_clean"};

} // namespace

Scenario Scenario::load(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const EngineError&) {
        throw EngineError(ErrorCode::ScenarioInvalid, "cannot read scenario: " + path);
    } catch (const json::exception& e) {
        throw EngineError(ErrorCode::ScenarioInvalid, "scenario " + path + ": " + e.what());
    }
    return from_json(doc, fs::path(path).parent_path().string());
}

Scenario Scenario::from_json(const json& spec, const std::string& base_dir) {
    if (!spec.is_object()) throw EngineError(ErrorCode::ScenarioInvalid, "scenario must be an object");
    check_keys(spec,
               {"name", "task", "script", "managers", "config", "durations", "assertions",
                "prompts"},
               "scenario");
    Scenario scenario;
    scenario.base_dir_ = base_dir.empty() ? "." : base_dir;
    scenario.spec_ = spec;
    if (!spec.contains("name") || !spec["name"].is_string()) {
        throw EngineError(ErrorCode::ScenarioInvalid, "scenario needs a string 'name'");
    }
    scenario.name_ = spec["name"].get<std::string>();
    if (!spec.contains("task") || !spec["task"].contains("text")) {
        throw EngineError(ErrorCode::ScenarioInvalid, "scenario needs task.text");
    }
    if (!spec.contains("script")) {
        throw EngineError(ErrorCode::ScenarioInvalid, "scenario needs a 'script'");
    }
    if (!spec.contains("managers") || !spec["managers"].is_array() || spec["managers"].empty()) {
        throw EngineError(ErrorCode::ScenarioInvalid, "scenario needs at least one manager");
    }
    if (spec.contains("assertions")) {
        check_keys(spec["assertions"], kAssertionKeys, "assertions");
    }
    // Resolve data files now so a broken reference fails at load time.
    std::string script_path =
        (fs::path(scenario.base_dir_) / spec["script"].get<std::string>()).string();
    json script;
    try {
        script = json::parse(read_file(script_path));
    } catch (const EngineError&) {
        throw EngineError(ErrorCode::ScenarioInvalid, "scenario script missing: " + script_path);
    } catch (const json::exception& e) {
        throw EngineError(ErrorCode::ScenarioInvalid,
                          "scenario script " + script_path + ": " + e.what());
    }
    // Every matcher key must exist; ScriptedBackend enforces it on load.
    try {
        ScriptedBackend probe(script);
    } catch (const EngineError& e) {
        throw EngineError(ErrorCode::ScenarioInvalid, e.what());
    }
    for (const auto& manager : spec["managers"]) {
        if (!manager.contains("fixture")) {
            throw EngineError(ErrorCode::ScenarioInvalid, "scenario manager needs a 'fixture'");
        }
        std::string fixture_path =
            (fs::path(scenario.base_dir_) / manager["fixture"].get<std::string>()).string();
        try {
            MockToolServer probe(json::parse(read_file(fixture_path)));
        } catch (const EngineError& e) {
            throw EngineError(ErrorCode::ScenarioInvalid, e.what());
        } catch (const json::exception& e) {
            throw EngineError(ErrorCode::ScenarioInvalid,
                              "fixture " + fixture_path + ": " + e.what());
        }
    }
    return scenario;
}

json Scenario::build_engine_config() const {
    const json& config = spec_.value("config", json::object());
    json engine;
    engine["backends"] = {
        {"host", {{"type", "scripted"}, {"script", spec_["script"].get<std::string>()}}},
        {"manager", {{"type", "scripted"}, {"script", spec_["script"].get<std::string>()}}},
        {"worker", {{"type", "scripted"}, {"script", spec_["script"].get<std::string>()}}}};
    if (config.contains("worker_token_ceiling")) {
        engine["worker_token_ceiling"] = config["worker_token_ceiling"].get<long>();
    }
    json managers = json::array();
    for (const auto& manager : spec_["managers"]) {
        json m = {{"id", manager.at("id").get<std::string>()},
                  {"domain", manager.value("domain", manager.at("id").get<std::string>())},
                  {"capability", manager.value("capability", "scenario manager")},
                  {"decompose_cap", manager.value("decompose_cap", 17)},
                  {"reflect_limit", manager.value("reflect_limit", 3)},
                  {"tools", {{"type", "mock"}, {"fixture", manager.at("fixture").get<std::string>()}}}};
        managers.push_back(std::move(m));
    }
    engine["managers"] = managers;
    engine["host"] = {{"step_limit", config.value("step_limit", 12)},
                      {"reprompt_limit", config.value("reprompt_limit", 1)}};
    engine["worker"] = {{"max_tool_turns", config.value("max_tool_turns", 12)},
                        {"tool_retry_limit", config.value("tool_retry_limit", 3)}};
    engine["scheduler"] = {{"budget", config.value("budget", 8)},
                           {"subtask_timeout", config.value("subtask_timeout", 300.0)},
                           {"clock", "virtual"}};
    engine["prompts"] = spec_.value("prompts", std::string("prompts"));
    if (spec_.contains("durations")) engine["durations"] = spec_["durations"];
    return engine;
}

Engine::RunOutput Scenario::execute(const ScenarioOverrides& overrides) const {
    EngineOverrides engine_overrides;
    engine_overrides.budget = overrides.budget;
    engine_overrides.extra_managers = overrides.extra_managers;
    engine_overrides.trace_path = overrides.trace_path;
    engine_overrides.worker_trace_root = overrides.worker_trace_root;
    Engine engine(build_engine_config(), base_dir_, engine_overrides);
    TaskQuery query;
    query.task_id = spec_["task"].value("id", name_);
    query.text = spec_["task"]["text"].get<std::string>();
    return engine.run(query);
}

namespace {

struct TraceFacts {
    std::map<int, int> wave_sizes;            // step -> revision-0 EXECUTE count
    std::map<int, std::set<int>> revised;     // step -> slots with revision > 0
    std::map<std::string, std::string> statuses; // "step.slot.rev" -> status
    std::map<std::string, int> event_counts;
    std::vector<std::string> manager_sequence; // per STEP event
    std::map<int, std::set<std::string>> flags_by_step;
    std::map<int, int> ok_counts; // step -> AGGREGATE ok_count
    std::set<std::string> error_codes;
    std::string terminated_by;
};

TraceFacts gather_facts(const std::vector<TraceEvent>& events) {
    TraceFacts facts;
    for (const auto& event : events) {
        facts.event_counts[to_string(event.kind)]++;
        const json& payload = event.payload;
        switch (event.kind) {
            case EventKind::EXECUTE: {
                int step = payload.value("step", 0);
                int slot = payload.value("slot", 0);
                int revision = payload.value("revision", 0);
                if (revision == 0) facts.wave_sizes[step]++;
                else facts.revised[step].insert(slot);
                facts.statuses[std::to_string(step) + "." + std::to_string(slot) + "." +
                               std::to_string(revision)] = payload.value("status", "");
                break;
            }
            case EventKind::STEP: {
                facts.manager_sequence.push_back(payload.value("manager", ""));
                int index = payload.value("index", 0);
                if (payload.contains("escalation_flags")) {
                    for (const auto& flag : payload["escalation_flags"]) {
                        facts.flags_by_step[index].insert(flag.get<std::string>());
                    }
                }
                break;
            }
            case EventKind::AGGREGATE:
                facts.ok_counts[payload.value("step", 0)] = payload.value("ok_count", 0);
                break;
            case EventKind::ERROR:
                facts.error_codes.insert(payload.value("code", ""));
                break;
            case EventKind::FINALIZE:
                facts.terminated_by = payload.value("terminated_by", "");
                break;
            default: break;
        }
    }
    return facts;
}

std::string join_ints(const std::vector<int>& values) {
    std::ostringstream out;
    for (size_t i = 0; i < values.size(); ++i) {
        if (i) out << ",";
        out << values[i];
    }
    return out.str();
}

} // namespace

ScenarioReport Scenario::run(const ScenarioOverrides& overrides) const {
    ScenarioReport report;
    Engine::RunOutput output = execute(overrides);
    report.answer = output.answer;
    report.events = output.events;
    report.trace_path = output.trace_path;
    report.metrics = summarize(output.events);

    const json& assertions = spec_.value("assertions", json::object());
    TraceFacts facts = gather_facts(output.events);

    auto add = [&](const std::string& name, bool pass, const std::string& detail) {
        report.assertions.push_back(AssertionOutcome{name, pass, detail});
    };

    if (assertions.contains("steps")) {
        int want = assertions["steps"].get<int>();
        add("steps", report.metrics.total_steps == want,
            "expected " + std::to_string(want) + ", got " +
                std::to_string(report.metrics.total_steps));
    }
    if (assertions.contains("subtasks")) {
        int want = assertions["subtasks"].get<int>();
        add("subtasks", report.metrics.total_subtasks == want,
            "expected " + std::to_string(want) + ", got " +
                std::to_string(report.metrics.total_subtasks));
    }
    if (assertions.contains("wave_sizes")) {
        std::vector<int> want;
        for (const auto& v : assertions["wave_sizes"]) want.push_back(v.get<int>());
        std::vector<int> got;
        for (const auto& [step, size] : facts.wave_sizes) {
            (void)step;
            got.push_back(size);
        }
        add("wave_sizes", want == got, "expected [" + join_ints(want) + "], got [" +
                                           join_ints(got) + "]");
    }
    if (assertions.contains("event_counts")) {
        for (const auto& [kind, count] : assertions["event_counts"].items()) {
            int want = count.get<int>();
            int got = facts.event_counts.count(kind) ? facts.event_counts[kind] : 0;
            add("event_counts." + kind, want == got,
                "expected " + std::to_string(want) + ", got " + std::to_string(got));
        }
    }
    if (assertions.contains("revised_slots")) {
        for (const auto& [step, slots] : assertions["revised_slots"].items()) {
            std::set<int> want;
            for (const auto& s : slots) want.insert(s.get<int>());
            std::set<int> got = facts.revised[std::stoi(step)];
            add("revised_slots." + step, want == got,
                "expected " + std::to_string(want.size()) + " slots, got " +
                    std::to_string(got.size()));
        }
    }
    if (assertions.contains("statuses")) {
        for (const auto& [key, status] : assertions["statuses"].items()) {
            std::string got = facts.statuses.count(key) ? facts.statuses[key] : "(absent)";
            add("statuses." + key, got == status.get<std::string>(),
                "expected " + status.get<std::string>() + ", got " + got);
        }
    }
    if (assertions.contains("final_golden")) {
        std::string golden_path =
            (fs::path(base_dir_) / assertions["final_golden"].get<std::string>()).string();
        std::string golden = read_file(golden_path);
        add("final_golden", report.answer.text == golden,
            report.answer.text == golden ? "byte-identical"
                                         : "final answer differs from " + golden_path);
    }
    if (assertions.contains("final_sha256")) {
        std::string want = assertions["final_sha256"].get<std::string>();
        std::string got = sha256_hex(report.answer.text);
        add("final_sha256", want == got, "expected " + want + ", got " + got);
    }
    if (assertions.contains("terminated_by")) {
        std::string want = assertions["terminated_by"].get<std::string>();
        add("terminated_by", facts.terminated_by == want,
            "expected " + want + ", got " + facts.terminated_by);
    }
    if (assertions.contains("manager_sequence")) {
        std::vector<std::string> want;
        for (const auto& m : assertions["manager_sequence"]) want.push_back(m.get<std::string>());
        bool pass = want == facts.manager_sequence;
        std::string got;
        for (const auto& m : facts.manager_sequence) got += m + " ";
        add("manager_sequence", pass, "got: " + got);
    }
    if (assertions.contains("escalation_flags")) {
        for (const auto& [step, flags] : assertions["escalation_flags"].items()) {
            std::set<std::string> want;
            for (const auto& f : flags) want.insert(f.get<std::string>());
            std::set<std::string> got = facts.flags_by_step[std::stoi(step)];
            std::string got_str;
            for (const auto& f : got) got_str += f + " ";
            add("escalation_flags." + step, want == got, "got: " + got_str);
        }
    }
    if (assertions.contains("total_makespan")) {
        double want = assertions["total_makespan"].get<double>();
        double got = 0.0;
        for (double m : report.metrics.step_makespans) got += m;
        add("total_makespan", std::abs(want - got) <= 1e-9,
            "expected " + std::to_string(want) + ", got " + std::to_string(got));
    }
    if (assertions.contains("avg_tool_calls_per_step")) {
        double want = assertions["avg_tool_calls_per_step"].get<double>();
        double got = report.metrics.total_steps == 0
                         ? 0.0
                         : (double)report.metrics.total_tool_calls / report.metrics.total_steps;
        add("avg_tool_calls_per_step", std::abs(want - got) <= 1e-9,
            "expected " + std::to_string(want) + ", got " + std::to_string(got));
    }
    if (assertions.contains("error_codes")) {
        for (const auto& code : assertions["error_codes"]) {
            std::string want = code.get<std::string>();
            add("error_codes." + want, facts.error_codes.count(want) != 0,
                facts.error_codes.count(want) ? "recorded" : "not recorded");
        }
    }
    if (assertions.contains("ok_counts")) {
        for (const auto& [step, count] : assertions["ok_counts"].items()) {
            int want = count.get<int>();
            int got = facts.ok_counts.count(std::stoi(step)) ? facts.ok_counts[std::stoi(step)] : -1;
            add("ok_counts." + step, want == got,
                "expected " + std::to_string(want) + ", got " + std::to_string(got));
        }
    }
    if (assertions.contains("speedup")) {
        const json& spec = assertions["speedup"];
        int baseline = spec.value("baseline", 1);
        int budget = spec.at("budget").get<int>();
        double want = spec.at("value").get<double>();
        double tol = spec.value("tol", 0.01);
        double got = compute_speedup(output.events, baseline, budget);
        add("speedup", std::abs(want - got) <= tol,
            "expected " + std::to_string(want) + " +/- " + std::to_string(tol) + ", got " +
                std::to_string(got));
    }
    if (assertions.contains("verify_clean") && assertions["verify_clean"].get<bool>()) {
        auto violations = verify_trace(output.events);
        std::string detail;
        for (const auto& violation : violations) {
            detail += violation.rule + " (" + violation.detail + "); ";
        }
        add("verify_clean", violations.empty(), violations.empty() ? "no violations" : detail);
    }
    if (assertions.contains("sweep")) {
        const json& spec = assertions["sweep"];
        std::vector<int> budgets;
        for (const auto& b : spec.at("budgets")) budgets.push_back(b.get<int>());
        auto rows = sweep(budgets);
        if (spec.contains("makespans")) {
            bool pass = true;
            std::string detail;
            for (size_t i = 0; i < rows.size(); ++i) {
                double want = spec["makespans"][i].get<double>();
                if (std::abs(rows[i].makespan - want) > 1e-9) {
                    pass = false;
                    detail += "budget " + std::to_string(rows[i].budget) + ": expected " +
                              std::to_string(want) + ", got " + std::to_string(rows[i].makespan) +
                              "; ";
                }
            }
            add("sweep.makespans", pass, pass ? "all match" : detail);
        }
        if (spec.value("monotone_nonincreasing", false)) {
            bool pass = true;
            for (size_t i = 1; i < rows.size(); ++i) {
                if (rows[i].makespan > rows[i - 1].makespan + 1e-12) pass = false;
            }
            add("sweep.monotone_nonincreasing", pass, pass ? "monotone" : "makespan increased");
        }
        if (spec.value("strict_decrease", false)) {
            bool pass = true;
            for (size_t i = 1; i < rows.size(); ++i) {
                if (rows[i].makespan >= rows[i - 1].makespan) pass = false;
            }
            add("sweep.strict_decrease", pass, pass ? "strictly decreasing" : "plateau found");
        }
        if (spec.contains("final_speedup")) {
            double want = spec["final_speedup"].at("value").get<double>();
            double tol = spec["final_speedup"].value("tol", 0.01);
            double got = rows.empty() ? 0.0 : rows.back().speedup;
            add("sweep.final_speedup", std::abs(want - got) <= tol,
                "expected " + std::to_string(want) + " +/- " + std::to_string(tol) + ", got " +
                    std::to_string(got));
        }
    }

    return report;
}

std::vector<SweepRow> Scenario::sweep(std::vector<int> budgets) const {
    std::sort(budgets.begin(), budgets.end());
    std::vector<SweepRow> rows;
    for (int budget : budgets) {
        ScenarioOverrides overrides;
        overrides.budget = budget;
        Engine::RunOutput output = execute(overrides);
        RunMetrics metrics = summarize(output.events);
        SweepRow row;
        row.budget = budget;
        for (double m : metrics.step_makespans) row.makespan += m;
        row.speedup = compute_speedup(output.events, 1, budget);
        rows.push_back(row);
    }
    return rows;
}

std::string format_sweep_table(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "workers  makespan  speedup\n";
    for (const auto& row : rows) {
        out << std::setw(7) << row.budget << "  " << std::setw(8) << row.makespan << "  "
            << std::fixed << std::setprecision(3) << row.speedup << "\n";
        out.unsetf(std::ios_base::floatfield);
    }
    return out.str();
}

} // namespace triad
