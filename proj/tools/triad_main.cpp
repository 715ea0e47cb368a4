// triad CLI: run tasks (live or scripted), run scenarios and worker
// sweeps, summarize and verify traces.
//
// Exit codes: 0 success, 1 task/assertion failure, 2 configuration or
// scenario error. stdout carries only the payload (final answer, report,
// table); diagnostics go to stderr.

#include "triad/engine.hpp"
#include "triad/simharness.hpp"
#include "triad/telemetry.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <sstream>
#include <thread>

namespace {

int exit_code_for(const triad::EngineError& e) {
    switch (e.code()) {
        case triad::ErrorCode::ConfigInvalid:
        case triad::ErrorCode::ScenarioInvalid: return 2;
        default: return 1;
    }
}

std::vector<int> parse_budget_list(const std::string& csv) {
    std::vector<int> budgets;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        budgets.push_back(std::stoi(item));
    }
    if (budgets.empty()) {
        throw triad::EngineError(triad::ErrorCode::ConfigInvalid, "--sweep needs a budget list");
    }
    return budgets;
}

int run_command(const std::string& task_text, const std::string& task_id,
                const std::string& config_path, int workers, int max_steps,
                const std::string& trace_out, bool virtual_clock) {
    triad::EngineOverrides overrides;
    if (workers > 0 || workers == 0) overrides.budget = workers; // 0 caught by validation
    if (max_steps >= 0) overrides.step_limit = max_steps;
    if (!trace_out.empty()) overrides.trace_path = trace_out;
    if (virtual_clock) overrides.virtual_clock = true;

    triad::Engine engine = triad::Engine::from_file(config_path, overrides);
    triad::TaskQuery query;
    query.text = task_text;
    query.task_id = task_id;
    auto output = engine.run(query);
    std::cout << output.answer.text;
    if (output.answer.text.empty() || output.answer.text.back() != '\n') std::cout << "\n";
    if (!output.trace_path.empty()) {
        std::cerr << "trace: " << output.trace_path << "\n";
    }
    return 0;
}

int scenario_command(const std::vector<std::string>& spec_paths, const std::string& sweep_csv,
                     bool parallel, int budget) {
    std::vector<triad::Scenario> scenarios;
    for (const auto& path : spec_paths) scenarios.push_back(triad::Scenario::load(path));

    if (!sweep_csv.empty()) {
        auto budgets = parse_budget_list(sweep_csv);
        for (const auto& scenario : scenarios) {
            auto rows = scenario.sweep(budgets);
            std::cout << "scenario " << scenario.name() << "\n"
                      << triad::format_sweep_table(rows);
        }
        return 0;
    }

    triad::ScenarioOverrides overrides;
    if (budget > 0) overrides.budget = budget;

    std::vector<triad::ScenarioReport> reports(scenarios.size());
    std::vector<std::string> errors(scenarios.size());
    auto run_one = [&](size_t i) {
        try {
            reports[i] = scenarios[i].run(overrides);
        } catch (const triad::EngineError& e) {
            errors[i] = e.what();
        }
    };
    if (parallel) {
        std::vector<std::thread> threads;
        threads.reserve(scenarios.size());
        for (size_t i = 0; i < scenarios.size(); ++i) threads.emplace_back(run_one, i);
        for (auto& t : threads) t.join();
    } else {
        for (size_t i = 0; i < scenarios.size(); ++i) run_one(i);
    }

    bool all_pass = true;
    for (size_t i = 0; i < scenarios.size(); ++i) {
        if (!errors[i].empty()) {
            std::cout << "scenario " << scenarios[i].name() << ": error: " << errors[i] << "\n";
            all_pass = false;
            continue;
        }
        const auto& report = reports[i];
        int passed = 0;
        for (const auto& assertion : report.assertions) {
            if (assertion.pass) {
                std::cout << "PASS " << assertion.name << "\n";
                ++passed;
            } else {
                std::cout << "FAIL " << assertion.name << ": " << assertion.detail << "\n";
            }
        }
        std::cout << "scenario " << scenarios[i].name() << ": " << passed << "/"
                  << report.assertions.size() << " assertions passed\n";
        all_pass = all_pass && report.all_pass();
    }
    return all_pass ? 0 : 1;
}

int trace_command(const std::string& path, const std::string& action, bool as_json) {
    auto events = triad::load_trace(path);
    if (action == "summarize") {
        auto metrics = triad::summarize(events);
        if (as_json) std::cout << metrics.to_json().dump(2) << "\n";
        else std::cout << metrics.to_table();
        return 0;
    }
    auto violations = triad::verify_trace(events);
    if (violations.empty()) {
        std::cout << "trace OK (" << events.size() << " events)\n";
        return 0;
    }
    for (const auto& violation : violations) {
        std::cout << "VIOLATION " << violation.rule << ": " << violation.detail << "\n";
    }
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"triad: hierarchical host/manager/worker orchestration engine"};
    app.require_subcommand(1);

    std::string task_text, config_path, trace_out, task_id = "task-1";
    int workers = -1, max_steps = -1;
    bool virtual_clock = false;
    auto* run = app.add_subcommand("run", "run one task against an engine config");
    run->add_option("--task", task_text, "task text")->required();
    run->add_option("--config", config_path, "engine config path")->required();
    run->add_option("--workers", workers, "concurrency budget override");
    run->add_option("--max-steps", max_steps, "step limit override");
    run->add_option("--trace-out", trace_out, "trace file path override");
    run->add_option("--task-id", task_id, "task id (default task-1)");
    run->add_flag("--virtual-clock", virtual_clock, "simulate on the virtual clock");

    std::vector<std::string> spec_paths;
    std::string sweep_csv;
    bool parallel = false;
    int budget = -1;
    auto* scenario = app.add_subcommand("scenario", "run scenario specs and their assertions");
    scenario->add_option("specs", spec_paths, "scenario spec paths")->required();
    scenario->add_option("--sweep", sweep_csv, "comma-separated worker budgets");
    scenario->add_option("--budget", budget, "single budget override");
    scenario->add_flag("--parallel", parallel, "run scenarios concurrently");

    std::string trace_path, trace_action;
    bool trace_json = false;
    auto* trace = app.add_subcommand("trace", "summarize or verify a trace file");
    trace->add_option("path", trace_path, "trace file")->required();
    trace->add_option("action", trace_action, "summarize|verify")
        ->required()
        ->check(CLI::IsMember({"summarize", "verify"}));
    trace->add_flag("--json", trace_json, "emit the summary as JSON");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            return run_command(task_text, task_id, config_path, workers, max_steps, trace_out,
                               virtual_clock);
        }
        if (scenario->parsed()) {
            return scenario_command(spec_paths, sweep_csv, parallel, budget);
        }
        if (trace->parsed()) {
            return trace_command(trace_path, trace_action, trace_json);
        }
    } catch (const triad::EngineError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
