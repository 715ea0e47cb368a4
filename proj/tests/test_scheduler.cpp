#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "triad/scheduler.hpp"

#include "oracles.hpp"

#include <chrono>
#include <random>
#include <thread>

using namespace triad;

namespace {

std::vector<Subtask> batch_of(const std::vector<double>& durations) {
    std::vector<Subtask> batch;
    for (size_t k = 0; k < durations.size(); ++k) {
        Subtask st;
        st.text = "subtask " + std::to_string(k);
        st.step_index = 1;
        st.slot = (int)k;
        batch.push_back(st);
    }
    return batch;
}

SubtaskRunner declared_durations(const std::vector<double>& durations) {
    return [durations](const Subtask& st, const WorkerDeadline&) {
        SubtaskResult result;
        result.subtask = st;
        result.status = SubtaskStatus::OK;
        result.text = "done " + std::to_string(st.slot);
        result.duration = durations[(size_t)st.slot];
        return result;
    };
}

std::vector<double> random_durations(std::mt19937& rng, int max_len = 32) {
    // Quarter-second grid keeps double arithmetic exact across algorithms.
    std::uniform_int_distribution<int> len_dist(1, max_len);
    std::uniform_int_distribution<int> quarter(0, 4 * 30);
    std::vector<double> durations((size_t)len_dist(rng));
    for (auto& d : durations) d = quarter(rng) / 4.0;
    return durations;
}

} // namespace

TEST_CASE("makespan_seq is the fold sum") {
    CHECK(makespan_seq({}) == 0.0);
    CHECK(makespan_seq({3, 5, 2}) == 10.0);
    std::mt19937 rng(11);
    for (int i = 0; i < 100; ++i) {
        auto d = random_durations(rng);
        CHECK(makespan_seq(d) == oracle::fold_sum(d));
    }
}

TEST_CASE("makespan_par: sufficient capacity degenerates to max, budget 1 to sum") {
    CHECK(makespan_par({3, 5, 2}, 16) == 5.0);
    CHECK(makespan_par({3, 5, 2}, 3) == 5.0);
    CHECK(makespan_par({3, 5, 2}, 1) == 10.0);
    CHECK(makespan_par({}, 4) == 0.0);
}

TEST_CASE("makespan_par agrees with the independent oracle, fixed cases") {
    // Greedy slot-order admission, worked by hand: slots 1-4 chain onto the
    // worker freed at t=1 while the 4s task occupies the other.
    CHECK(oracle::list_makespan({4, 1, 1, 1, 1}, 2) == 4.0);
    CHECK(makespan_par({4, 1, 1, 1, 1}, 2) == oracle::list_makespan({4, 1, 1, 1, 1}, 2));
    CHECK(makespan_par({1, 8, 2, 2, 2}, 2) == oracle::list_makespan({1, 8, 2, 2, 2}, 2));
    CHECK(makespan_par({5, 4, 3, 2, 1}, 3) == oracle::list_makespan({5, 4, 3, 2, 1}, 3));
}

TEST_CASE("the calibrated 911-second vector schedules as shipped") {
    // 162 plus sixteen 46.8125s: the duration profile behind the shipped
    // calibrated scenario, cross-checked against the oracle per budget.
    std::vector<double> durations{162.0};
    for (int i = 0; i < 16; ++i) durations.push_back(46.8125);
    CHECK(makespan_seq(durations) == 911.0);
    const std::vector<std::pair<int, double>> expected = {
        {1, 911.0}, {2, 468.125}, {4, 234.0625}, {8, 162.0}, {16, 162.0}, {17, 162.0}};
    for (const auto& [budget, makespan] : expected) {
        CHECK(makespan_par(durations, budget) == makespan);
        CHECK(oracle::list_makespan(durations, budget) == makespan);
    }
}

TEST_CASE("makespan_par agrees with the oracle on random vectors") {
    std::mt19937 rng(12);
    for (int i = 0; i < 300; ++i) {
        auto d = random_durations(rng);
        int budget = 1 + (int)(rng() % 32);
        CHECK(makespan_par(d, budget) == oracle::list_makespan(d, budget));
    }
}

TEST_CASE("makespan bounds and monotonicity properties") {
    std::mt19937 rng(13);
    for (int i = 0; i < 200; ++i) {
        auto d = random_durations(rng);
        double longest = 0;
        for (double v : d) longest = std::max(longest, v);

        double seq = makespan_seq(d);
        CHECK(makespan_par(d, 1) == seq);
        double previous = -1.0;
        for (int budget : {1, 2, 3, 5, 8, 13, 21, 34}) {
            double par = makespan_par(d, budget);
            CHECK(par <= seq);
            CHECK(par >= longest);
            if (previous >= 0) CHECK(par <= previous); // non-increasing in budget
            previous = par;
        }
    }
}

TEST_CASE("list_schedule starts are FIFO and overlap respects the budget") {
    std::mt19937 rng(14);
    for (int i = 0; i < 100; ++i) {
        auto d = random_durations(rng);
        int budget = 1 + (int)(rng() % 8);
        auto timing = list_schedule(d, budget);
        auto reference = oracle::list_schedule(d, budget);
        REQUIRE(timing.size() == reference.size());
        for (size_t k = 0; k < timing.size(); ++k) {
            CHECK(timing[k].start == reference[k].first);
            CHECK(timing[k].finish == reference[k].second);
            if (k > 0) CHECK(timing[k].start >= timing[k - 1].start);
        }
        CHECK(max_overlap(timing) <= budget);
    }
}

TEST_CASE("virtual wave: makespan equals makespan_par exactly") {
    SchedulerConfig cfg;
    cfg.clock = ClockMode::VIRTUAL;
    cfg.subtask_timeout = 1e9;

    std::vector<double> durations{3, 5, 2};
    cfg.budget = 3;
    WaveResult wave = execute_wave(batch_of(durations), cfg, declared_durations(durations));
    CHECK(wave.makespan == 5.0);

    cfg.budget = 1;
    wave = execute_wave(batch_of(durations), cfg, declared_durations(durations));
    CHECK(wave.makespan == 10.0);

    std::mt19937 rng(15);
    for (int i = 0; i < 100; ++i) {
        auto d = random_durations(rng, 16);
        cfg.budget = 1 + (int)(rng() % 16);
        wave = execute_wave(batch_of(d), cfg, declared_durations(d));
        CHECK(wave.makespan == makespan_par(d, cfg.budget));
        CHECK(wave.max_in_flight <= cfg.budget);
        REQUIRE(wave.results.size() == d.size());
        for (size_t k = 0; k < d.size(); ++k) {
            CHECK(wave.results[k].subtask.slot == (int)k); // slot order
            CHECK(wave.results[k].duration == d[k]);
        }
    }
}

TEST_CASE("virtual wave: declared duration beyond the timeout becomes TIMEOUT") {
    SchedulerConfig cfg;
    cfg.clock = ClockMode::VIRTUAL;
    cfg.budget = 2;
    cfg.subtask_timeout = 300.0;
    std::vector<double> durations{5, 400};
    WaveResult wave = execute_wave(batch_of(durations), cfg, declared_durations(durations));
    CHECK(wave.results[0].status == SubtaskStatus::OK);
    CHECK(wave.results[1].status == SubtaskStatus::TIMEOUT);
    CHECK(wave.results[1].duration == 300.0);
    CHECK(wave.makespan == 300.0);
}

TEST_CASE("wall wave: budget is honored and results stay in slot order") {
    SchedulerConfig cfg;
    cfg.clock = ClockMode::WALL;
    cfg.budget = 2;
    cfg.subtask_timeout = 30.0;

    // Slot 0 sleeps longest so completion order is the reverse of slot order.
    std::vector<int> sleep_ms{60, 40, 20, 5};
    std::atomic<int> in_flight{0};
    std::atomic<int> peak{0};
    SubtaskRunner runner = [&](const Subtask& st, const WorkerDeadline&) {
        int now = ++in_flight;
        int old_peak = peak.load();
        while (now > old_peak && !peak.compare_exchange_weak(old_peak, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(sleep_ms[(size_t)st.slot]));
        --in_flight;
        SubtaskResult result;
        result.subtask = st;
        result.text = "slot " + std::to_string(st.slot);
        return result;
    };

    std::vector<Subtask> batch = batch_of({0, 0, 0, 0});
    WaveResult wave = execute_wave(batch, cfg, runner);
    CHECK(peak.load() <= 2);
    CHECK(wave.max_in_flight <= 2);
    REQUIRE(wave.results.size() == 4);
    for (size_t k = 0; k < 4; ++k) {
        CHECK(wave.results[k].text == "slot " + std::to_string(k));
        CHECK(wave.results[k].duration >= 0.0);
    }
    CHECK(wave.makespan > 0.0);
}

TEST_CASE("wall wave: expired deadline reported by a cooperating runner") {
    SchedulerConfig cfg;
    cfg.clock = ClockMode::WALL;
    cfg.budget = 1;
    cfg.subtask_timeout = 0.02;

    SubtaskRunner runner = [&](const Subtask& st, const WorkerDeadline& deadline) {
        std::this_thread::sleep_for(std::chrono::milliseconds(40));
        SubtaskResult result;
        result.subtask = st;
        if (deadline.expired()) {
            result.status = SubtaskStatus::TIMEOUT;
            result.text = "partial";
        } else {
            result.text = "full";
        }
        return result;
    };
    WaveResult wave = execute_wave(batch_of({0}), cfg, runner);
    CHECK(wave.results[0].status == SubtaskStatus::TIMEOUT);
    CHECK(wave.results[0].text == "partial"); // partial text carried through
}

TEST_CASE("run clock: virtual advances only on demand") {
    RunClock clock(ClockMode::VIRTUAL);
    CHECK(clock.now() == 0.0);
    clock.advance(2.5);
    clock.advance(1.5);
    CHECK(clock.now() == 4.0);

    RunClock wall(ClockMode::WALL);
    double t0 = wall.now();
    wall.advance(100.0); // no-op on the wall clock
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    CHECK(wall.now() >= t0);
    CHECK(wall.now() < 50.0);
}
