#pragma once
// Bounded-concurrency wave execution and the step timing model.
//
// A wave runs one batch of subtasks under a concurrency budget, either on
// the wall clock (real threads, semaphore admission) or on a virtual clock
// (discrete-event simulation over durations the runners declare). Admission
// is greedy list scheduling in slot order: no work stealing, no priorities.
//
// makespan_seq is the serial sum of a duration vector; makespan_par is the
// list-scheduling makespan under a budget, which degenerates to the plain
// maximum once the budget covers the batch.

#include "triad/core.hpp"

#include <chrono>
#include <functional>
#include <vector>

namespace triad {

enum class ClockMode { WALL, VIRTUAL };

struct SchedulerConfig {
    int budget = 8;                 // W_w >= 1
    double subtask_timeout = 300.0; // seconds, wall or virtual
    ClockMode clock = ClockMode::WALL;
};

using DurationVector = std::vector<double>;

double makespan_seq(const DurationVector& durations);
double makespan_par(const DurationVector& durations, int budget);

struct SlotTiming {
    double start = 0.0;
    double finish = 0.0;
};

// Greedy slot-order admission over a shared budget; returns wave-relative
// (start, finish) per slot. The queue is FIFO: starts are non-decreasing.
std::vector<SlotTiming> list_schedule(const DurationVector& durations, int budget);

// Largest number of slots whose [start, finish) intervals overlap.
int max_overlap(const std::vector<SlotTiming>& timing);

// Deadline handed to each runner; runners poll it between turns. A
// default-constructed deadline never expires.
struct WorkerDeadline {
    bool enabled = false;
    std::chrono::steady_clock::time_point at{};

    bool expired() const {
        return enabled && std::chrono::steady_clock::now() >= at;
    }
};

using SubtaskRunner = std::function<SubtaskResult(const Subtask&, const WorkerDeadline&)>;

struct WaveResult {
    std::vector<SubtaskResult> results; // slot order, independent of completion order
    std::vector<SlotTiming> timing;     // wave-relative seconds per slot
    double makespan = 0.0;
    int max_in_flight = 0;
};

// Runs every subtask exactly once. Per-subtask failures come back as
// statuses; the wave itself never throws. On the virtual clock the runners
// execute sequentially in slot order (their declared result durations feed
// the simulation), so scripted runs stay fully deterministic.
WaveResult execute_wave(const std::vector<Subtask>& batch, const SchedulerConfig& cfg,
                        const SubtaskRunner& runner);

// Per-run time source. Virtual mode starts at zero and advances only when
// the engine accounts a wave; wall mode reports seconds since construction.
class RunClock {
public:
    explicit RunClock(ClockMode mode)
        : mode_(mode), epoch_(std::chrono::steady_clock::now()) {}

    ClockMode mode() const { return mode_; }

    double now() const {
        if (mode_ == ClockMode::VIRTUAL) return virtual_now_;
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_).count();
    }

    void advance(double dt) {
        if (mode_ == ClockMode::VIRTUAL) virtual_now_ += dt;
    }

private:
    ClockMode mode_;
    std::chrono::steady_clock::time_point epoch_;
    double virtual_now_ = 0.0;
};

} // namespace triad
