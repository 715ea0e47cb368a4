#pragma once
// Configuration loading and per-run assembly: backends per role, managers
// with their tool servers, scheduler, host, trace sink. One Engine holds
// the long-lived pieces (backends, tool clients); each run gets a fresh
// clock, sink and manager/host graph.

#include "triad/backends.hpp"
#include "triad/host.hpp"
#include "triad/manager.hpp"
#include "triad/mcp.hpp"
#include "triad/scheduler.hpp"
#include "triad/telemetry.hpp"
#include "triad/worker.hpp"

#include <json.hpp>

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace triad {

struct ExtraManagerSpec {
    std::string id;
    std::string domain;
    std::string capability;
};

struct EngineOverrides {
    std::optional<int> budget;
    std::optional<int> step_limit;
    std::optional<bool> virtual_clock;
    std::optional<std::string> trace_path;
    std::optional<std::string> worker_trace_root;
    std::vector<ExtraManagerSpec> extra_managers; // registered, never wired
};

// Per-subtask virtual durations, keyed "step.slot.revision" first, then
// "step.slot", then the default.
struct DurationTable {
    double default_duration = 1.0;
    std::map<std::string, double> by_subtask;

    double lookup(const Subtask& subtask) const;
};

class Engine {
public:
    // `config` follows the schema documented in the README; relative paths
    // resolve against base_dir. Throws ConfigInvalid on any schema problem.
    Engine(const nlohmann::json& config, const std::string& base_dir,
           const EngineOverrides& overrides = {});

    static Engine from_file(const std::string& path, const EngineOverrides& overrides = {});

    struct RunOutput {
        FinalAnswer answer;
        std::string trace_path; // empty when the sink was memory-only
        std::vector<TraceEvent> events;
    };

    RunOutput run(const TaskQuery& query);

    // The scripted backend bound to a role, or nullptr for live bindings.
    ScriptedBackend* scripted_backend(Role role);

    ClockMode clock_mode() const { return scheduler_.clock; }
    const SchedulerConfig& scheduler_config() const { return scheduler_; }
    int step_limit() const { return host_.step_limit; }

private:
    struct ManagerRuntime {
        ManagerConfig config;
        std::shared_ptr<MockToolServer> mock_server; // when tools are mocked
        std::unique_ptr<ToolClient> client;
        std::string worker_prompt; // worker template with {tools} rendered
    };

    std::shared_ptr<Backend> build_backend(const nlohmann::json& binding, long ceiling_override);
    void wire_manager(const nlohmann::json& spec);

    std::string base_dir_;
    HostConfig host_;
    WorkerConfig worker_;
    SchedulerConfig scheduler_;
    DurationTable durations_;
    std::string trace_path_;
    std::string worker_trace_root_;

    std::map<std::string, std::shared_ptr<Backend>> backend_cache_; // keyed path|ceiling
    std::shared_ptr<Backend> host_backend_;
    std::shared_ptr<Backend> manager_backend_;
    std::shared_ptr<Backend> worker_backend_;
    std::map<Role, ScriptedBackend*> scripted_;

    std::vector<ManagerRuntime> managers_;
    std::vector<ExtraManagerSpec> extra_managers_;
    std::set<std::string> used_task_ids_;
};

} // namespace triad
