#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "triad/simharness.hpp"
#include "triad/text.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <thread>

using namespace triad;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kShippedScenarios = {
    "scenarios/restaurants/scenario.json", "scenarios/riddle/scenario.json",
    "scenarios/scaling/scenario.json",     "scenarios/calibrated/scenario.json",
    "scenarios/reflect_injection/scenario.json", "scenarios/token_guard/scenario.json",
};

std::string failures_of(const ScenarioReport& report) {
    std::string out;
    for (const auto& assertion : report.assertions) {
        if (!assertion.pass) out += assertion.name + " (" + assertion.detail + "); ";
    }
    return out;
}

} // namespace

TEST_CASE("every shipped scenario is self-verifying on a clean checkout") {
    for (const auto& path : kShippedScenarios) {
        CAPTURE(path);
        auto scenario = Scenario::load(path);
        auto report = scenario.run();
        CHECK_MESSAGE(report.all_pass(), failures_of(report));
        CHECK(report.assertions.size() > 0);
    }
}

TEST_CASE("scenario reruns are identical: metrics and trace bytes") {
    for (const auto& path : kShippedScenarios) {
        CAPTURE(path);
        auto scenario = Scenario::load(path);
        auto first = scenario.run();
        auto second = scenario.run();
        CHECK(first.answer.text == second.answer.text);
        CHECK(first.metrics.to_json() == second.metrics.to_json());
        CHECK(canonical_lines(first.events, false) == canonical_lines(second.events, false));
    }
}

TEST_CASE("scenario loader rejects broken specs") {
    auto invalid_code = [](const json& spec, const std::string& dir) {
        try {
            Scenario::from_json(spec, dir);
            return ErrorCode::TaskFailed; // should not be reached
        } catch (const EngineError& e) {
            return e.code();
        }
    };

    json valid = load_json_file("scenarios/scaling/scenario.json");
    CHECK_NOTHROW(Scenario::from_json(valid, "scenarios/scaling"));

    json missing_name = valid;
    missing_name.erase("name");
    CHECK(invalid_code(missing_name, "scenarios/scaling") == ErrorCode::ScenarioInvalid);

    json unknown_key = valid;
    unknown_key["surprise"] = 1;
    CHECK(invalid_code(unknown_key, "scenarios/scaling") == ErrorCode::ScenarioInvalid);

    json unknown_assert = valid;
    unknown_assert["assertions"]["not_a_thing"] = true;
    CHECK(invalid_code(unknown_assert, "scenarios/scaling") == ErrorCode::ScenarioInvalid);

    json missing_script = valid;
    missing_script["script"] = "does_not_exist.json";
    CHECK(invalid_code(missing_script, "scenarios/scaling") == ErrorCode::ScenarioInvalid);

    json no_managers = valid;
    no_managers["managers"] = json::array();
    CHECK(invalid_code(no_managers, "scenarios/scaling") == ErrorCode::ScenarioInvalid);
}

TEST_CASE("a script matcher referencing a missing key is ScenarioInvalid at load") {
    fs::path dir = fs::temp_directory_path() / "triad_scn_invalid";
    fs::create_directories(dir);
    std::ofstream(dir / "script.json")
        << R"({"responses":{},"matchers":[{"role":"host","contains":"x","key":"host:absent"}]})";
    std::ofstream(dir / "tools.json") << R"({"server_name":"t","tools":[],"responses":{}})";
    json spec = {{"name", "broken"},
                 {"task", {{"id", "b"}, {"text", "x"}}},
                 {"script", "script.json"},
                 {"managers", json::array({{{"id", "m"}, {"fixture", "tools.json"}}})}};
    try {
        Scenario::from_json(spec, dir.string());
        FAIL("expected ScenarioInvalid");
    } catch (const EngineError& e) {
        CHECK(e.code() == ErrorCode::ScenarioInvalid);
    }
    fs::remove_all(dir);
}

TEST_CASE("failing assertions are reported, not thrown") {
    json spec = load_json_file("scenarios/scaling/scenario.json");
    spec["assertions"] = {{"steps", 99}};
    auto scenario = Scenario::from_json(spec, "scenarios/scaling");
    auto report = scenario.run();
    REQUIRE(report.assertions.size() == 1);
    CHECK_FALSE(report.assertions[0].pass);
    CHECK_FALSE(report.all_pass());
}

TEST_CASE("sweep returns sorted budgets with makespans and speedups") {
    auto scenario = Scenario::load("scenarios/scaling/scenario.json");
    auto rows = scenario.sweep({17, 1, 4}); // unsorted on purpose
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].budget == 1);
    CHECK(rows[1].budget == 4);
    CHECK(rows[2].budget == 17);
    CHECK(rows[0].makespan == 17.0);
    CHECK(rows[1].makespan == 5.0);
    CHECK(rows[2].makespan == 1.0);
    CHECK(rows[0].speedup == 1.0);
    CHECK(rows[2].speedup == 17.0);
    std::string table = format_sweep_table(rows);
    CHECK(table.find("workers") != std::string::npos);
    CHECK(table.find("17") != std::string::npos);
}

TEST_CASE("budget overrides flow through to the engine") {
    auto scenario = Scenario::load("scenarios/scaling/scenario.json");
    ScenarioOverrides overrides;
    overrides.budget = 4;
    auto report = scenario.run(overrides);
    double total = 0;
    for (double m : report.metrics.step_makespans) total += m;
    CHECK(total == 5.0); // ceil(17/4) unit-duration groups
}

TEST_CASE("independent scenarios run concurrently without interference") {
    std::vector<ScenarioReport> reports(kShippedScenarios.size());
    std::vector<std::string> errors(kShippedScenarios.size());
    std::vector<std::thread> threads;
    for (size_t i = 0; i < kShippedScenarios.size(); ++i) {
        threads.emplace_back([&, i] {
            try {
                auto scenario = Scenario::load(kShippedScenarios[i]);
                reports[i] = scenario.run();
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        });
    }
    for (auto& thread : threads) thread.join();
    for (size_t i = 0; i < reports.size(); ++i) {
        CAPTURE(kShippedScenarios[i]);
        CHECK(errors[i].empty());
        CHECK_MESSAGE(reports[i].all_pass(), failures_of(reports[i]));
    }
}

TEST_CASE("task ids are unique within one engine run") {
    auto scenario = Scenario::load("scenarios/scaling/scenario.json");
    Engine engine(scenario.engine_config(), scenario.base_dir());
    TaskQuery query;
    query.task_id = "same-id";
    query.text = "Run seventeen independent unit probes and report completion.";
    engine.run(query);
    try {
        engine.run(query);
        FAIL("expected ConfigInvalid for a reused task id");
    } catch (const EngineError& e) {
        CHECK(e.code() == ErrorCode::ConfigInvalid);
    }
}

TEST_CASE("an empty task text is rejected before any backend call") {
    auto scenario = Scenario::load("scenarios/scaling/scenario.json");
    Engine engine(scenario.engine_config(), scenario.base_dir());
    TaskQuery query;
    query.task_id = "blank";
    query.text = "   \n  ";
    try {
        engine.run(query);
        FAIL("expected ConfigInvalid for empty task text");
    } catch (const EngineError& e) {
        CHECK(e.code() == ErrorCode::ConfigInvalid);
    }
}

TEST_CASE("worker trace files land under the configured root") {
    auto scenario = Scenario::load("scenarios/restaurants/scenario.json");
    fs::path root = fs::temp_directory_path() / "triad_worker_traces";
    fs::remove_all(root);
    ScenarioOverrides overrides;
    overrides.worker_trace_root = root.string();
    auto report = scenario.run(overrides);
    CHECK(report.all_pass());
    CHECK(fs::exists(root / "restaurants" / "1" / "0.0.trace"));
    CHECK(fs::exists(root / "restaurants" / "2" / "9.0.trace"));
    // Tool payload sentinels live here, in the worker tier.
    std::ifstream in(root / "restaurants" / "1" / "0.0.trace");
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(content.find("SNTL_") != std::string::npos);
    fs::remove_all(root);
}
