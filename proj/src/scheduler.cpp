#include "triad/scheduler.hpp"

#include <algorithm>
#include <condition_variable>
#include <mutex>
#include <queue>
#include <thread>

namespace triad {

double makespan_seq(const DurationVector& durations) {
    double total = 0.0;
    for (double d : durations) total += d;
    return total;
}

std::vector<SlotTiming> list_schedule(const DurationVector& durations, int budget) {
    if (budget < 1) budget = 1;
    std::vector<SlotTiming> timing(durations.size());
    // Min-heap of in-flight finish times. The popped minimum never
    // decreases, so slot starts come out FIFO.
    std::priority_queue<double, std::vector<double>, std::greater<double>> in_flight;
    for (size_t k = 0; k < durations.size(); ++k) {
        double start = 0.0;
        if ((int)in_flight.size() >= budget) {
            start = in_flight.top();
            in_flight.pop();
        }
        timing[k].start = start;
        timing[k].finish = start + durations[k];
        in_flight.push(timing[k].finish);
    }
    return timing;
}

double makespan_par(const DurationVector& durations, int budget) {
    double makespan = 0.0;
    for (const auto& slot : list_schedule(durations, budget)) {
        makespan = std::max(makespan, slot.finish);
    }
    return makespan;
}

int max_overlap(const std::vector<SlotTiming>& timing) {
    // Sweep over start/finish boundaries; finishes processed before starts
    // at equal times, matching the scheduler's free-then-admit order.
    std::vector<std::pair<double, int>> boundaries;
    boundaries.reserve(timing.size() * 2);
    for (const auto& slot : timing) {
        boundaries.emplace_back(slot.start, +1);
        boundaries.emplace_back(slot.finish, -1);
    }
    std::sort(boundaries.begin(), boundaries.end(),
              [](const auto& a, const auto& b) {
                  if (a.first != b.first) return a.first < b.first;
                  return a.second < b.second;
              });
    int current = 0, peak = 0;
    for (const auto& [t, delta] : boundaries) {
        (void)t;
        current += delta;
        peak = std::max(peak, current);
    }
    return peak;
}

namespace {

WaveResult execute_wave_virtual(const std::vector<Subtask>& batch, const SchedulerConfig& cfg,
                                const SubtaskRunner& runner) {
    WaveResult wave;
    wave.results.reserve(batch.size());
    DurationVector durations;
    durations.reserve(batch.size());

    WorkerDeadline no_deadline; // virtual timeouts apply to declared durations
    for (const auto& subtask : batch) {
        SubtaskResult result = runner(subtask, no_deadline);
        result.subtask = subtask;
        if (cfg.subtask_timeout > 0 && result.duration > cfg.subtask_timeout) {
            result.status = SubtaskStatus::TIMEOUT;
            result.duration = cfg.subtask_timeout;
        }
        durations.push_back(result.duration);
        wave.results.push_back(std::move(result));
    }

    wave.timing = list_schedule(durations, cfg.budget);
    wave.makespan = 0.0;
    for (const auto& slot : wave.timing) wave.makespan = std::max(wave.makespan, slot.finish);
    wave.max_in_flight = max_overlap(wave.timing);
    return wave;
}

WaveResult execute_wave_wall(const std::vector<Subtask>& batch, const SchedulerConfig& cfg,
                             const SubtaskRunner& runner) {
    WaveResult wave;
    wave.results.resize(batch.size());
    wave.timing.resize(batch.size());

    const auto epoch = std::chrono::steady_clock::now();
    std::mutex admission_mutex;
    std::condition_variable admission_cv;
    int in_flight = 0;
    int peak = 0;
    size_t next_slot = 0; // admission strictly in slot order

    auto run_one = [&](size_t k) {
        const auto admitted = std::chrono::steady_clock::now();
        WorkerDeadline deadline;
        if (cfg.subtask_timeout > 0) {
            deadline.enabled = true;
            deadline.at = admitted + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                         std::chrono::duration<double>(cfg.subtask_timeout));
        }
        SubtaskResult result = runner(batch[k], deadline);
        result.subtask = batch[k];
        const auto finished = std::chrono::steady_clock::now();
        wave.timing[k].start = std::chrono::duration<double>(admitted - epoch).count();
        wave.timing[k].finish = std::chrono::duration<double>(finished - epoch).count();
        result.duration = wave.timing[k].finish - wave.timing[k].start;
        wave.results[k] = std::move(result);
    };

    std::vector<std::thread> threads;
    threads.reserve(batch.size());
    for (size_t k = 0; k < batch.size(); ++k) {
        threads.emplace_back([&, k] {
            {
                std::unique_lock<std::mutex> lock(admission_mutex);
                admission_cv.wait(lock, [&] {
                    return next_slot == k && in_flight < cfg.budget;
                });
                ++in_flight;
                peak = std::max(peak, in_flight);
                ++next_slot;
                admission_cv.notify_all();
            }
            run_one(k);
            {
                std::lock_guard<std::mutex> lock(admission_mutex);
                --in_flight;
            }
            admission_cv.notify_all();
        });
    }
    for (auto& t : threads) t.join();

    wave.makespan = 0.0;
    for (const auto& slot : wave.timing) wave.makespan = std::max(wave.makespan, slot.finish);
    wave.max_in_flight = peak;
    return wave;
}

} // namespace

WaveResult execute_wave(const std::vector<Subtask>& batch, const SchedulerConfig& cfg,
                        const SubtaskRunner& runner) {
    if (cfg.clock == ClockMode::VIRTUAL) return execute_wave_virtual(batch, cfg, runner);
    return execute_wave_wall(batch, cfg, runner);
}

} // namespace triad
