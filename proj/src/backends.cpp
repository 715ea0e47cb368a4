#include "triad/backends.hpp"
#include "triad/text.hpp"

#include <httplib.h>

#include <cstdlib>

namespace triad {

using nlohmann::json;

const char* to_string(Role role) {
    switch (role) {
        case Role::HOST:    return "host";
        case Role::MANAGER: return "manager";
        case Role::WORKER:  return "worker";
    }
    return "host";
}

long estimate_tokens(const std::string& text) {
    if (text.empty()) return 0;
    return (long)((text.size() + 3) / 4);
}

long estimate_request_tokens(const CompletionRequest& req) {
    long total = estimate_tokens(req.system_prompt);
    for (const auto& turn : req.transcript) total += estimate_tokens(turn.text);
    return total;
}

void enforce_token_ceiling(const CompletionRequest& req, long ceiling) {
    long tokens = estimate_request_tokens(req);
    if (tokens > ceiling) {
        throw EngineError(ErrorCode::TokenLimitExceeded,
                          "request estimated at " + std::to_string(tokens) +
                              " tokens, ceiling is " + std::to_string(ceiling));
    }
}

static void validate_params(const CompletionRequest& req) {
    for (const auto& [key, value] : req.params) {
        (void)value;
        if (key != "temperature" && key != "max_tokens") {
            throw EngineError(ErrorCode::ConfigInvalid, "unknown completion param: " + key);
        }
    }
}

// ---------------------------------------------------------------------------
// ScriptedBackend
// ---------------------------------------------------------------------------

ScriptedBackend::ScriptedBackend(const json& script, long token_ceiling)
    : token_ceiling_(token_ceiling) {
    if (!script.is_object() || !script.contains("responses") || !script["responses"].is_object()) {
        throw EngineError(ErrorCode::ConfigInvalid, "script needs a 'responses' object");
    }
    for (const auto& [key, value] : script["responses"].items()) {
        Entry entry;
        if (value.is_array()) {
            for (const auto& r : value) entry.replies.push_back(r.get<std::string>());
        } else if (value.is_object() && value.contains("repeat") && value["repeat"].is_array()) {
            for (const auto& r : value["repeat"]) entry.replies.push_back(r.get<std::string>());
            entry.repeat = true;
        } else {
            throw EngineError(ErrorCode::ConfigInvalid,
                              "script key '" + key + "' must map to an array or {\"repeat\": [...]}");
        }
        if (entry.replies.empty()) {
            throw EngineError(ErrorCode::ConfigInvalid, "script key '" + key + "' has no replies");
        }
        entries_[key] = std::move(entry);
    }
    if (script.contains("matchers")) {
        for (const auto& m : script["matchers"]) {
            Matcher matcher;
            matcher.role = m.at("role").get<std::string>();
            const auto& contains = m.at("contains");
            if (contains.is_string()) {
                matcher.needles.push_back(contains.get<std::string>());
            } else {
                for (const auto& n : contains) matcher.needles.push_back(n.get<std::string>());
            }
            matcher.key = m.at("key").get<std::string>();
            if (entries_.find(matcher.key) == entries_.end()) {
                throw EngineError(ErrorCode::ConfigInvalid,
                                  "matcher references unknown script key: " + matcher.key);
            }
            matchers_.push_back(std::move(matcher));
        }
    }
}

json load_json_file(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw EngineError(ErrorCode::ConfigInvalid, path + ": " + e.what());
    }
}

std::string ScriptedBackend::resolve_key(const CompletionRequest& req) const {
    const std::string role = to_string(req.role);
    if (!req.transcript.empty()) {
        std::string computed =
            role + ":" + fnv1a64_hex8(nfc_normalize(req.transcript.back().text));
        if (entries_.find(computed) != entries_.end()) return computed;
    }
    std::string haystack = req.system_prompt;
    for (const auto& turn : req.transcript) {
        haystack += "\n";
        haystack += turn.text;
    }
    for (const auto& matcher : matchers_) {
        if (matcher.role != role) continue;
        bool all = true;
        for (const auto& needle : matcher.needles) {
            if (haystack.find(needle) == std::string::npos) {
                all = false;
                break;
            }
        }
        if (all) return matcher.key;
    }
    throw EngineError(ErrorCode::ScriptExhausted,
                      "no scripted response matches a " + role + " request (last entry: \"" +
                          (req.transcript.empty() ? "" : req.transcript.back().text).substr(0, 120) +
                          "\")");
}

Completion ScriptedBackend::complete(const CompletionRequest& req) {
    if (req.transcript.empty()) {
        throw EngineError(ErrorCode::ConfigInvalid, "completion request has an empty transcript");
    }
    validate_params(req);
    enforce_token_ceiling(req, token_ceiling_);

    std::lock_guard<std::mutex> lock(mutex_);
    log_.push_back(RecordedRequest{req.role, req.system_prompt, req.transcript});

    std::string key = resolve_key(req);
    Entry& entry = entries_.at(key);
    if (entry.cursor >= entry.replies.size()) {
        if (entry.repeat) {
            entry.cursor = 0;
        } else {
            throw EngineError(ErrorCode::ScriptExhausted, "script key exhausted: " + key);
        }
    }
    const std::string& text = entry.replies[entry.cursor++];

    Completion completion;
    completion.text = text;
    completion.prompt_tokens = estimate_request_tokens(req);
    completion.completion_tokens = estimate_tokens(text);
    return completion;
}

std::vector<RecordedRequest> ScriptedBackend::recorded_requests() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return log_;
}

// ---------------------------------------------------------------------------
// HttpBackend
// ---------------------------------------------------------------------------

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
    // Split "scheme://host:port/path" into client base and request path.
    auto scheme_end = config_.endpoint.find("://");
    if (scheme_end == std::string::npos) {
        throw EngineError(ErrorCode::ConfigInvalid, "endpoint needs a scheme: " + config_.endpoint);
    }
    auto path_start = config_.endpoint.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        scheme_host_port_ = config_.endpoint;
        path_ = "/";
    } else {
        scheme_host_port_ = config_.endpoint.substr(0, path_start);
        path_ = config_.endpoint.substr(path_start);
    }
}

Completion HttpBackend::complete(const CompletionRequest& req) {
    if (req.transcript.empty()) {
        throw EngineError(ErrorCode::ConfigInvalid, "completion request has an empty transcript");
    }
    validate_params(req);
    enforce_token_ceiling(req, config_.token_ceiling);

    json messages = json::array();
    if (!req.system_prompt.empty()) {
        messages.push_back({{"role", "system"}, {"content", req.system_prompt}});
    }
    for (const auto& turn : req.transcript) {
        // Tool outputs ride as user turns; tool use is modeled at the MCP
        // layer, not the model API layer.
        std::string role = turn.speaker == "assistant" ? "assistant" : "user";
        messages.push_back({{"role", role}, {"content", turn.text}});
    }

    json body = {{"model", config_.model}, {"messages", messages}};
    body["temperature"] =
        req.params.count("temperature") ? req.params.at("temperature") : config_.temperature;
    body["max_tokens"] =
        req.params.count("max_tokens") ? (long)req.params.at("max_tokens") : config_.max_tokens;

    httplib::Client client(scheme_host_port_);
    client.set_read_timeout(config_.timeout_seconds, 0);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
        const char* key = std::getenv(config_.api_key_env.c_str());
        if (key != nullptr && *key != '\0') {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
    }

    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) {
        throw EngineError(ErrorCode::BackendUnavailable,
                          "POST " + config_.endpoint + " failed: " +
                              httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw EngineError(ErrorCode::BackendUnavailable,
                          "POST " + config_.endpoint + " returned " + std::to_string(res->status) +
                              ": " + res->body.substr(0, 400));
    }

    json doc;
    try {
        doc = json::parse(res->body);
    } catch (const json::exception& e) {
        throw EngineError(ErrorCode::BackendUnavailable, std::string("bad response body: ") + e.what());
    }

    Completion completion;
    try {
        completion.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw EngineError(ErrorCode::BackendUnavailable,
                          std::string("response missing choices/message/content: ") + e.what());
    }
    // Provider token counts, when reported, override estimates.
    completion.prompt_tokens = estimate_request_tokens(req);
    completion.completion_tokens = estimate_tokens(completion.text);
    if (doc.contains("usage") && doc["usage"].is_object()) {
        const auto& usage = doc["usage"];
        if (usage.contains("prompt_tokens")) completion.prompt_tokens = usage["prompt_tokens"].get<long>();
        if (usage.contains("completion_tokens"))
            completion.completion_tokens = usage["completion_tokens"].get<long>();
    }
    return completion;
}

} // namespace triad
