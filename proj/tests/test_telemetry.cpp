#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "triad/simharness.hpp"
#include "triad/telemetry.hpp"
#include "triad/text.hpp"

#include "oracles.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <random>

using namespace triad;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

TraceEvent make_event(long seq, double time, Actor actor, EventKind kind, json payload = {}) {
    TraceEvent e;
    e.seq = seq;
    e.time = time;
    e.actor = actor;
    e.kind = kind;
    e.payload = std::move(payload);
    return e;
}

// A minimal, well-formed synthetic trace: one step, two subtasks.
std::vector<TraceEvent> small_valid_trace() {
    std::vector<TraceEvent> events;
    events.push_back(make_event(0, 0, Actor::MANAGER, EventKind::DECOMPOSE,
                                {{"step", 1}, {"count", 2}, {"reflect_limit", 3}}));
    events.push_back(make_event(1, 1, Actor::WORKER, EventKind::EXECUTE,
                                {{"step", 1}, {"slot", 0}, {"revision", 0}, {"duration", 1.0}}));
    events.push_back(make_event(2, 2, Actor::WORKER, EventKind::EXECUTE,
                                {{"step", 1}, {"slot", 1}, {"revision", 0}, {"duration", 2.0}}));
    events.push_back(make_event(3, 2, Actor::MANAGER, EventKind::REFLECT,
                                {{"step", 1}, {"round", 1}, {"verdict", "accept"},
                                 {"replaced_slots", json::array()}}));
    events.push_back(make_event(4, 2, Actor::MANAGER, EventKind::AGGREGATE,
                                {{"step", 1}, {"summary", "done"}, {"ok_count", 2},
                                 {"failed_count", 0}, {"makespan", 2.0}}));
    events.push_back(make_event(5, 2, Actor::HOST, EventKind::STEP,
                                {{"index", 1}, {"directive", "d"}, {"manager", "search"},
                                 {"summary", "done"}, {"subtask_count", 2},
                                 {"escalation_flags", json::array()}}));
    events.push_back(make_event(6, 2, Actor::HOST, EventKind::STOP, {{"after_steps", 1}}));
    events.push_back(make_event(7, 2, Actor::HOST, EventKind::FINALIZE,
                                {{"task_id", "t"}, {"text", "final"}, {"steps_used", 1},
                                 {"terminated_by", "STOP"}, {"step_limit", 12},
                                 {"clock", "virtual"}}));
    return events;
}

} // namespace

TEST_CASE("sink assigns contiguous seq starting at zero") {
    TraceSink sink;
    CHECK(sink.record(Actor::HOST, EventKind::WARNING, 0.0, {{"message", "first"}}) == 0);
    CHECK(sink.record(Actor::HOST, EventKind::WARNING, 0.5, {{"message", "second"}}) == 1);
    auto events = sink.events();
    REQUIRE(events.size() == 2);
    CHECK(events[0].seq == 0);
    CHECK(events[1].seq == 1);
}

TEST_CASE("append rejects out-of-order seq and time regressions") {
    TraceSink sink;
    sink.append(make_event(0, 1.0, Actor::HOST, EventKind::WARNING));
    CHECK_THROWS_AS(sink.append(make_event(2, 2.0, Actor::HOST, EventKind::WARNING)), EngineError);
    CHECK_THROWS_AS(sink.append(make_event(1, 0.5, Actor::HOST, EventKind::WARNING)), EngineError);
    sink.append(make_event(1, 1.0, Actor::HOST, EventKind::WARNING)); // equal time is fine
}

TEST_CASE("trace file round-trips through load_trace") {
    fs::path path = fs::temp_directory_path() / "triad_trace_roundtrip.jsonl";
    {
        TraceSink sink(path.string());
        for (const auto& event : small_valid_trace()) sink.append(event);
    }
    auto events = load_trace(path.string());
    REQUIRE(events.size() == 8);
    CHECK(events[4].payload.value("makespan", 0.0) == 2.0);
    CHECK(events[7].kind == EventKind::FINALIZE);
    fs::remove(path);
}

TEST_CASE("empty and garbled trace files are TruncatedTrace") {
    fs::path path = fs::temp_directory_path() / "triad_trace_empty.jsonl";
    std::ofstream(path.string()).close();
    try {
        load_trace(path.string());
        FAIL("expected TruncatedTrace");
    } catch (const EngineError& e) {
        CHECK(e.code() == ErrorCode::TruncatedTrace);
    }
    std::ofstream(path.string()) << "{not json\n";
    CHECK_THROWS_AS(load_trace(path.string()), EngineError);
    fs::remove(path);
}

TEST_CASE("summarize counts events and totals tokens per actor") {
    auto events = small_valid_trace();
    events[1].tokens_in = 100;
    events[1].tokens_out = 10;
    events[5].tokens_in = 50;
    events[5].tokens_out = 5;
    RunMetrics metrics = summarize(events);
    CHECK(metrics.total_steps == 1);
    CHECK(metrics.total_subtasks == 2);
    CHECK(metrics.total_tool_calls == 0);
    REQUIRE(metrics.step_makespans.size() == 1);
    CHECK(metrics.step_makespans[0] == 2.0);
    CHECK(metrics.tokens_by_actor["WORKER"].tokens_in == 100);
    CHECK(metrics.tokens_by_actor["HOST"].tokens_in == 50);
    CHECK(metrics.total_tokens_in == 150);
    CHECK(metrics.total_tokens_out == 15);
}

TEST_CASE("summarize requires a FINALIZE event") {
    auto events = small_valid_trace();
    events.pop_back();
    try {
        summarize(events);
        FAIL("expected TruncatedTrace");
    } catch (const EngineError& e) {
        CHECK(e.code() == ErrorCode::TruncatedTrace);
    }
}

TEST_CASE("token additivity: trace totals equal the sum of per-request tokens") {
    auto scenario = Scenario::load("scenarios/restaurants/scenario.json");
    auto report = scenario.run();
    long event_in = 0, event_out = 0;
    for (const auto& event : report.events) {
        event_in += event.tokens_in;
        event_out += event.tokens_out;
    }
    CHECK(event_in == report.metrics.total_tokens_in);
    CHECK(event_out == report.metrics.total_tokens_out);
    CHECK(event_in > 0);
    CHECK(event_out > 0);
}

TEST_CASE("compute_speedup: homogeneous wave is budget-limited exactly") {
    std::vector<TraceEvent> events;
    for (int k = 0; k < 17; ++k) {
        events.push_back(make_event(k, 1.0, Actor::WORKER, EventKind::EXECUTE,
                                    {{"step", 1}, {"slot", k}, {"revision", 0}, {"duration", 1.0}}));
    }
    CHECK(compute_speedup(events, 1, 17) == 17.0);
    CHECK(compute_speedup(events, 1, 1) == 1.0);
}

TEST_CASE("compute_speedup: the calibrated endpoint vector lands near 5.62") {
    std::vector<TraceEvent> events;
    events.push_back(make_event(0, 0.0, Actor::WORKER, EventKind::EXECUTE,
                                {{"step", 1}, {"slot", 0}, {"revision", 0}, {"duration", 162.0}}));
    for (int k = 1; k < 17; ++k) {
        events.push_back(make_event(k, 0.0, Actor::WORKER, EventKind::EXECUTE,
                                    {{"step", 1}, {"slot", k}, {"revision", 0}, {"duration", 46.8125}}));
    }
    double speedup = compute_speedup(events, 1, 17);
    CHECK(speedup == doctest::Approx(911.0 / 162.0).epsilon(1e-12));
    CHECK(std::abs(speedup - 5.62) < 0.01);
}

TEST_CASE("compute_speedup agrees with the oracle and is monotone in budget") {
    std::mt19937 rng(21);
    for (int round = 0; round < 50; ++round) {
        int steps = 1 + (int)(rng() % 3);
        std::vector<TraceEvent> events;
        std::vector<std::vector<double>> durations_by_step(steps);
        long seq = 0;
        for (int s = 0; s < steps; ++s) {
            int n = 1 + (int)(rng() % 12);
            for (int k = 0; k < n; ++k) {
                double d = (double)(rng() % 64) / 4.0;
                durations_by_step[s].push_back(d);
                events.push_back(make_event(seq++, 0.0, Actor::WORKER, EventKind::EXECUTE,
                                            {{"step", s + 1}, {"slot", k}, {"revision", 0},
                                             {"duration", d}}));
            }
        }
        double previous = 0.0;
        for (int budget : {1, 2, 4, 8, 16}) {
            double expected_num = 0.0, expected_den = 0.0;
            for (const auto& d : durations_by_step) {
                expected_num += oracle::list_makespan(d, 1);
                expected_den += oracle::list_makespan(d, budget);
            }
            double expected = expected_den == 0.0 ? 1.0 : expected_num / expected_den;
            double got = compute_speedup(events, 1, budget);
            CHECK(got == expected);
            CHECK(got >= previous - 1e-12); // non-decreasing in budget
            previous = got;
        }
    }
}

TEST_CASE("compute_speedup without durations is MissingDurations") {
    std::vector<TraceEvent> no_execute{make_event(0, 0, Actor::HOST, EventKind::FINALIZE)};
    CHECK_THROWS_AS(compute_speedup(no_execute, 1, 4), EngineError);
    std::vector<TraceEvent> no_duration{make_event(
        0, 0, Actor::WORKER, EventKind::EXECUTE, {{"step", 1}, {"slot", 0}})};
    try {
        compute_speedup(no_duration, 1, 4);
        FAIL("expected MissingDurations");
    } catch (const EngineError& e) {
        CHECK(e.code() == ErrorCode::MissingDurations);
    }
}

TEST_CASE("rebuild_exchanges replays STEP events; independent count agrees") {
    // Build a 7-step trace through the sink, write it to a file.
    fs::path path = fs::temp_directory_path() / "triad_trace_seven.jsonl";
    {
        TraceSink sink(path.string());
        for (int t = 1; t <= 7; ++t) {
            sink.record(Actor::HOST, EventKind::STEP, (double)t,
                        {{"index", t}, {"directive", "d" + std::to_string(t)},
                         {"manager", "search"},
                         {"summary", "s" + std::to_string(t)}, {"subtask_count", t},
                         {"escalation_flags", json::array()}});
        }
        sink.record(Actor::HOST, EventKind::FINALIZE, 8.0,
                    {{"task_id", "seven"}, {"text", "done"}, {"steps_used", 7},
                     {"terminated_by", "STOP"}, {"step_limit", 12}, {"clock", "virtual"}});
    }

    auto events = load_trace(path.string());
    auto exchanges = rebuild_exchanges(events);
    HostContext ctx;
    ctx.exchanges = exchanges;
    CHECK(context_entry_count(ctx) == 7);
    CHECK(exchanges[3].directive.text == "d4");
    CHECK(exchanges[6].summary.subtask_count == 7);

    // Independent check: plain string scan over the file.
    std::ifstream in(path.string(), std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(oracle::count_lines_containing(content, "\"kind\":\"STEP\"") == 7);
    fs::remove(path);
}

TEST_CASE("verify_trace passes a clean synthetic trace") {
    CHECK(verify_trace(small_valid_trace()).empty());
}

TEST_CASE("verify_trace flags broken event algebra") {
    auto has_rule = [](const std::vector<Violation>& violations, const std::string& rule) {
        for (const auto& v : violations) {
            if (v.rule == rule) return true;
        }
        return false;
    };

    SUBCASE("seq gap") {
        auto events = small_valid_trace();
        events[3].seq = 9;
        CHECK(has_rule(verify_trace(events), "seq-contiguous"));
    }
    SUBCASE("time regression") {
        auto events = small_valid_trace();
        events[2].time = 0.5;
        events[3].time = 0.4;
        CHECK(has_rule(verify_trace(events), "time-monotone"));
    }
    SUBCASE("missing aggregate") {
        auto events = small_valid_trace();
        events.erase(events.begin() + 4);
        for (size_t i = 0; i < events.size(); ++i) events[i].seq = (long)i;
        CHECK(has_rule(verify_trace(events), "one-aggregate"));
    }
    SUBCASE("execute count mismatch") {
        auto events = small_valid_trace();
        events[0].payload["count"] = 3;
        CHECK(has_rule(verify_trace(events), "execute-count"));
    }
    SUBCASE("reflect bound exceeded") {
        auto events = small_valid_trace();
        events[0].payload["reflect_limit"] = 0;
        CHECK(has_rule(verify_trace(events), "reflect-bounds"));
    }
    SUBCASE("execute outside the map/reduce span") {
        auto events = small_valid_trace();
        std::swap(events[2], events[4]); // EXECUTE after AGGREGATE
        events[2].seq = 2;
        events[4].seq = 4;
        CHECK(has_rule(verify_trace(events), "map-reduce-order"));
    }
    SUBCASE("host attributed tool call") {
        auto events = small_valid_trace();
        events.insert(events.begin() + 1,
                      make_event(0, 1, Actor::HOST, EventKind::TOOL_CALL,
                                 {{"step", 1}, {"slot", 0}, {"revision", 0},
                                  {"call_index", 0}, {"tool", "x"}, {"arguments", json::object()}}));
        for (size_t i = 0; i < events.size(); ++i) events[i].seq = (long)i;
        CHECK(has_rule(verify_trace(events), "host-never-calls-tools"));
    }
    SUBCASE("step count law") {
        auto events = small_valid_trace();
        events[7].payload["steps_used"] = 3;
        CHECK(has_rule(verify_trace(events), "step-count-law"));
    }
    SUBCASE("sentinel leak into a host summary") {
        auto events = small_valid_trace();
        events.insert(events.begin() + 1,
                      make_event(0, 1, Actor::TOOL, EventKind::TOOL_RESULT,
                                 {{"step", 1}, {"slot", 0}, {"revision", 0}, {"call_index", 0},
                                  {"is_error", false}, {"payload", "data SNTL_leak42 data"}}));
        for (size_t i = 0; i < events.size(); ++i) events[i].seq = (long)i;
        CHECK(verify_trace(events).empty()); // payload alone is fine
        events[6].payload["summary"] = "quoting SNTL_leak42 upward";
        auto violations = verify_trace(events);
        CHECK(has_rule(violations, "context-isolation"));
    }
}

TEST_CASE("canonical_lines masks wall times and timing fields") {
    auto events = small_valid_trace();
    events[4].time = 123.456;
    auto raw = canonical_lines(events, false);
    auto masked = canonical_lines(events, true);
    CHECK(raw[4].find("123.456") != std::string::npos);
    CHECK(masked[4].find("123.456") == std::string::npos);
    CHECK(masked[4].find("\"makespan\":0.0") != std::string::npos);
    CHECK(raw.size() == masked.size());
}

TEST_CASE("golden restaurant trace: shipped counts hold") {
    auto events = load_trace("scenarios/restaurants/golden_trace.jsonl");
    RunMetrics metrics = summarize(events);
    CHECK(metrics.total_steps == 2);
    CHECK(metrics.total_subtasks == 12);
    CHECK(verify_trace(events).empty());

    // Independent substring count over the shipped file.
    std::ifstream in("scenarios/restaurants/golden_trace.jsonl", std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(oracle::count_lines_containing(content, "\"kind\":\"STEP\"") == 2);
    CHECK(oracle::count_lines_containing(content, "\"kind\":\"EXECUTE\"") == 12);
}
