#include "triad/engine.hpp"
#include "triad/text.hpp"

#include <filesystem>

namespace triad {

using nlohmann::json;
namespace fs = std::filesystem;

double DurationTable::lookup(const Subtask& subtask) const {
    std::string exact = std::to_string(subtask.step_index) + "." + std::to_string(subtask.slot) +
                        "." + std::to_string(subtask.revision);
    auto it = by_subtask.find(exact);
    if (it != by_subtask.end()) return it->second;
    std::string by_slot = std::to_string(subtask.step_index) + "." + std::to_string(subtask.slot);
    it = by_subtask.find(by_slot);
    if (it != by_subtask.end()) return it->second;
    return default_duration;
}

namespace {

std::string resolve_path(const std::string& base_dir, const std::string& path) {
    fs::path p(path);
    if (p.is_absolute()) return path;
    return (fs::path(base_dir) / p).string();
}

const json& require(const json& doc, const char* key, const std::string& where) {
    if (!doc.contains(key)) {
        throw EngineError(ErrorCode::ConfigInvalid, where + " is missing '" + key + "'");
    }
    return doc.at(key);
}

std::string load_template(const std::string& base_dir, const std::string& prompt_dir,
                          const json& spec, const char* key, const char* default_file) {
    std::string path;
    if (spec.is_object() && spec.contains("templates") && spec["templates"].contains(key)) {
        path = resolve_path(base_dir, spec["templates"][key].get<std::string>());
    } else {
        path = (fs::path(prompt_dir) / default_file).string();
    }
    return read_file(path);
}

} // namespace

Engine Engine::from_file(const std::string& path, const EngineOverrides& overrides) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw EngineError(ErrorCode::ConfigInvalid, "config " + path + ": " + e.what());
    }
    return Engine(doc, fs::path(path).parent_path().string(), overrides);
}

std::shared_ptr<Backend> Engine::build_backend(const json& binding, long ceiling_override) {
    std::string type = binding.value("type", "");
    long ceiling = binding.value("token_ceiling", (long)kDefaultTokenCeiling);
    if (ceiling_override > 0) ceiling = ceiling_override;
    if (type == "scripted") {
        std::string path = resolve_path(base_dir_, require(binding, "script", "backend").get<std::string>());
        std::string cache_key = path + "|" + std::to_string(ceiling);
        auto it = backend_cache_.find(cache_key);
        if (it != backend_cache_.end()) return it->second;
        auto backend = std::make_shared<ScriptedBackend>(load_json_file(path), ceiling);
        backend_cache_[cache_key] = backend;
        return backend;
    }
    if (type == "http") {
        HttpBackendConfig http;
        http.endpoint = require(binding, "endpoint", "http backend").get<std::string>();
        http.model = binding.value("model", "");
        http.api_key_env = binding.value("api_key_env", "");
        http.temperature = binding.value("temperature", 1.0);
        http.max_tokens = binding.value("max_tokens", 4096L);
        http.token_ceiling = ceiling;
        http.timeout_seconds = binding.value("timeout_seconds", 120);
        return std::make_shared<HttpBackend>(http);
    }
    throw EngineError(ErrorCode::ConfigInvalid, "backend type must be scripted|http, got: " + type);
}

Engine::Engine(const json& config, const std::string& base_dir, const EngineOverrides& overrides)
    : base_dir_(base_dir.empty() ? "." : base_dir) {
    if (!config.is_object()) throw EngineError(ErrorCode::ConfigInvalid, "config must be an object");

    const json& backends = require(config, "backends", "config");
    std::string prompt_dir =
        resolve_path(base_dir_, config.value("prompts", std::string("prompts")));

    // Host
    const json& host = config.value("host", json::object());
    host_.step_limit = host.value("step_limit", 12);
    host_.reprompt_limit = host.value("reprompt_limit", 1);
    if (overrides.step_limit) host_.step_limit = *overrides.step_limit;
    if (host_.step_limit < 1) throw EngineError(ErrorCode::ConfigInvalid, "step_limit must be >= 1");
    if (host_.reprompt_limit < 0) {
        throw EngineError(ErrorCode::ConfigInvalid, "reprompt_limit must be >= 0");
    }
    host_.plan_template = load_template(base_dir_, prompt_dir, host, "plan", "host_plan.txt");
    host_.finalize_template =
        load_template(base_dir_, prompt_dir, host, "finalize", "host_finalize.txt");

    // Worker
    const json& worker = config.value("worker", json::object());
    worker_.max_tool_turns = worker.value("max_tool_turns", 12);
    worker_.tool_retry_limit = worker.value("tool_retry_limit", 3);
    if (worker_.max_tool_turns < 1) {
        throw EngineError(ErrorCode::ConfigInvalid, "max_tool_turns must be >= 1");
    }
    if (worker_.tool_retry_limit < 0) {
        throw EngineError(ErrorCode::ConfigInvalid, "tool_retry_limit must be >= 0");
    }
    worker_.prompt_template = load_template(base_dir_, prompt_dir, worker, "prompt", "worker.txt");

    // Scheduler
    const json& scheduler = config.value("scheduler", json::object());
    scheduler_.budget = scheduler.value("budget", 8);
    scheduler_.subtask_timeout = scheduler.value("subtask_timeout", 300.0);
    std::string clock = scheduler.value("clock", "wall");
    if (clock != "wall" && clock != "virtual") {
        throw EngineError(ErrorCode::ConfigInvalid, "scheduler.clock must be wall|virtual");
    }
    scheduler_.clock = clock == "virtual" ? ClockMode::VIRTUAL : ClockMode::WALL;
    if (overrides.budget) scheduler_.budget = *overrides.budget;
    if (overrides.virtual_clock) {
        scheduler_.clock = *overrides.virtual_clock ? ClockMode::VIRTUAL : ClockMode::WALL;
    }
    if (scheduler_.budget < 1) throw EngineError(ErrorCode::ConfigInvalid, "budget must be >= 1");
    if (scheduler_.subtask_timeout <= 0) {
        throw EngineError(ErrorCode::ConfigInvalid, "subtask_timeout must be > 0");
    }

    // Durations (virtual clock)
    if (config.contains("durations")) {
        const json& durations = config["durations"];
        durations_.default_duration = durations.value("default", 1.0);
        if (durations.contains("by_subtask")) {
            for (const auto& [key, value] : durations["by_subtask"].items()) {
                durations_.by_subtask[key] = value.get<double>();
            }
        }
    }

    trace_path_ = config.value("trace", std::string());
    if (!trace_path_.empty()) trace_path_ = resolve_path(base_dir_, trace_path_);
    worker_trace_root_ = config.value("worker_trace_dir", std::string());
    if (!worker_trace_root_.empty()) {
        worker_trace_root_ = resolve_path(base_dir_, worker_trace_root_);
    }
    if (overrides.trace_path) trace_path_ = *overrides.trace_path;
    if (overrides.worker_trace_root) worker_trace_root_ = *overrides.worker_trace_root;

    // Backends per role; scripted ones sharing a file share cursors.
    long worker_ceiling = config.value("worker_token_ceiling", 0L);
    host_backend_ = build_backend(require(backends, "host", "backends"), 0);
    manager_backend_ = build_backend(require(backends, "manager", "backends"), 0);
    worker_backend_ = build_backend(require(backends, "worker", "backends"), worker_ceiling);
    scripted_[Role::HOST] = dynamic_cast<ScriptedBackend*>(host_backend_.get());
    scripted_[Role::MANAGER] = dynamic_cast<ScriptedBackend*>(manager_backend_.get());
    scripted_[Role::WORKER] = dynamic_cast<ScriptedBackend*>(worker_backend_.get());

    // Managers
    const json& managers = require(config, "managers", "config");
    if (!managers.is_array() || managers.empty()) {
        throw EngineError(ErrorCode::ConfigInvalid, "config needs at least one manager");
    }
    for (const auto& spec : managers) {
        ManagerRuntime runtime;
        runtime.config.manager_id = require(spec, "id", "manager").get<std::string>();
        runtime.config.domain = spec.value("domain", runtime.config.manager_id);
        runtime.config.capability = require(spec, "capability", "manager").get<std::string>();
        runtime.config.decompose_cap = spec.value("decompose_cap", 17);
        runtime.config.reflect_limit = spec.value("reflect_limit", 3);
        if (runtime.config.decompose_cap < 1) {
            throw EngineError(ErrorCode::ConfigInvalid, "decompose_cap must be >= 1");
        }
        if (runtime.config.reflect_limit < 1) {
            throw EngineError(ErrorCode::ConfigInvalid, "reflect_limit must be >= 1");
        }
        if (spec.contains("escalation_markers")) {
            runtime.config.escalation_markers.clear();
            for (const auto& marker : spec["escalation_markers"]) {
                runtime.config.escalation_markers.push_back(marker.get<std::string>());
            }
        }
        runtime.config.decompose_template =
            load_template(base_dir_, prompt_dir, spec, "decompose", "decompose.txt");
        runtime.config.reflect_template =
            load_template(base_dir_, prompt_dir, spec, "reflect", "reflect.txt");
        runtime.config.aggregate_template =
            load_template(base_dir_, prompt_dir, spec, "aggregate", "aggregate.txt");

        const json& tools = require(spec, "tools", "manager " + runtime.config.manager_id);
        std::string tool_type = tools.value("type", "mock");
        std::unique_ptr<Transport> transport;
        if (tool_type == "mock") {
            json fixture;
            if (tools.contains("fixture_inline")) {
                fixture = tools["fixture_inline"];
            } else {
                std::string path = resolve_path(
                    base_dir_, require(tools, "fixture", "manager tools").get<std::string>());
                try {
                    fixture = json::parse(read_file(path));
                } catch (const json::exception& e) {
                    throw EngineError(ErrorCode::ConfigInvalid,
                                      "fixture " + path + ": " + e.what());
                }
            }
            runtime.mock_server = std::make_shared<MockToolServer>(fixture);
            transport = std::make_unique<LoopbackTransport>(runtime.mock_server);
        } else if (tool_type == "stdio") {
            std::vector<std::string> command;
            for (const auto& arg : require(tools, "command", "manager tools")) {
                command.push_back(arg.get<std::string>());
            }
            transport = std::make_unique<StdioTransport>(command);
        } else {
            throw EngineError(ErrorCode::ConfigInvalid, "tools.type must be mock|stdio");
        }
        runtime.client = std::make_unique<ToolClient>(std::move(transport));
        runtime.client->initialize();
        std::string tool_lines;
        for (const auto& descriptor : runtime.client->list_tools()) {
            tool_lines += "- " + descriptor.name + ": " + descriptor.description + "\n";
        }
        runtime.worker_prompt = render_template(worker_.prompt_template, {{"tools", tool_lines}});
        managers_.push_back(std::move(runtime));
    }
    extra_managers_ = overrides.extra_managers;
}

ScriptedBackend* Engine::scripted_backend(Role role) { return scripted_[role]; }

Engine::RunOutput Engine::run(const TaskQuery& query) {
    if (trim(query.text).empty()) {
        throw EngineError(ErrorCode::ConfigInvalid, "task text is empty");
    }
    if (query.task_id.empty() || !used_task_ids_.insert(query.task_id).second) {
        throw EngineError(ErrorCode::ConfigInvalid,
                          "task_id must be non-empty and unique per engine run: " + query.task_id);
    }

    TraceSink sink = trace_path_.empty() ? TraceSink() : TraceSink(trace_path_);
    RunClock clock(scheduler_.clock);

    std::vector<std::unique_ptr<Manager>> live_managers;
    ManagerRegistry registry;
    for (auto& runtime : managers_) {
        WorkerInvoker invoker = [this, &runtime, task_id = query.task_id](
                                    const Subtask& subtask, const WorkerDeadline& deadline) {
            WorkerConfig worker_cfg = worker_;
            worker_cfg.prompt_template = runtime.worker_prompt;
            WorkerOutcome outcome = run_subtask(worker_cfg, subtask, *runtime.client,
                                                *worker_backend_, task_id, worker_trace_root_,
                                                deadline);
            if (scheduler_.clock == ClockMode::VIRTUAL) {
                outcome.result.duration = durations_.lookup(subtask);
            }
            return outcome;
        };
        live_managers.push_back(std::make_unique<Manager>(runtime.config, *manager_backend_,
                                                          scheduler_, std::move(invoker), sink,
                                                          clock));
        Manager* manager = live_managers.back().get();
        registry.add(RegisteredManager{
            runtime.config.manager_id, runtime.config.capability,
            [manager](const StepDirective& d) { return manager->handle_step(d); }});
    }
    for (const auto& extra : extra_managers_) {
        registry.add(RegisteredManager{
            extra.id, extra.capability, [id = extra.id](const StepDirective&) -> StepSummary {
                throw EngineError(ErrorCode::StepFailed, "manager '" + id + "' is not wired");
            }});
    }

    Host host(host_, *host_backend_, registry, sink, clock);
    FinalAnswer answer = host.run_task(query);
    return RunOutput{answer, trace_path_, sink.events()};
}

} // namespace triad
