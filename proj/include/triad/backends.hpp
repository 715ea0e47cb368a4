#pragma once
// Pluggable completion boundary for the three agent tiers.
//
// ScriptedBackend replays canned completions from a script file and is the
// workhorse for tests, scenarios and replay. HttpBackend talks to any
// chat-completions style endpoint. Both enforce the per-request token
// ceiling before sending anything: exceeding it raises TokenLimitExceeded
// instead of truncating silently.

#include "triad/errors.hpp"

#include <json.hpp>

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace triad {

enum class Role { HOST, MANAGER, WORKER };

const char* to_string(Role role); // "host" / "manager" / "worker"

struct Turn {
    std::string speaker; // "user", "assistant", "tool"
    std::string text;
};

struct CompletionRequest {
    Role role = Role::HOST;
    std::string system_prompt;
    std::vector<Turn> transcript; // non-empty
    std::map<std::string, double> params; // keys: temperature, max_tokens
};

struct Completion {
    std::string text;
    long prompt_tokens = 0;
    long completion_tokens = 0;
};

// chars/4 heuristic, exact zero for empty text, ceil for the rest.
long estimate_tokens(const std::string& text);

// Parses a script/fixture JSON file with readable diagnostics.
nlohmann::json load_json_file(const std::string& path); // ConfigInvalid

long estimate_request_tokens(const CompletionRequest& req);

constexpr long kDefaultTokenCeiling = 272000;

class Backend {
public:
    virtual ~Backend() = default;
    // Must be callable concurrently from all workers plus the manager/host.
    virtual Completion complete(const CompletionRequest& req) = 0;
};

// --------------------------------------------------------------------------
// Scripted backend
//
// Script file: a JSON object
//   {
//     "responses": {
//       "<key>": ["first reply", "second reply", ...],
//       "<key>": {"repeat": ["reply"]}            // cycles forever
//     },
//     "matchers": [
//       {"role": "host", "contains": ["needle", ...], "key": "<key>"}
//     ]
//   }
//
// Lookup for a request tries, in order:
//   1. the computed key  <role> ":" fnv1a64_hex8(nfc(last transcript text))
//   2. the first matcher whose role matches and whose needles all occur in
//      the concatenated transcript text
// Responses under one key are consumed in order; an exhausted or missing
// key raises ScriptExhausted.
// --------------------------------------------------------------------------

struct RecordedRequest {
    Role role;
    std::string system_prompt;
    std::vector<Turn> transcript;
};

class ScriptedBackend : public Backend {
public:
    explicit ScriptedBackend(const nlohmann::json& script, long token_ceiling = kDefaultTokenCeiling);

    Completion complete(const CompletionRequest& req) override;

    // Every request seen, in arrival order. Used by determinism and
    // extensibility tests to compare the exact bytes sent per role.
    std::vector<RecordedRequest> recorded_requests() const;

private:
    struct Entry {
        std::vector<std::string> replies;
        bool repeat = false;
        size_t cursor = 0;
    };
    struct Matcher {
        std::string role;
        std::vector<std::string> needles;
        std::string key;
    };

    std::string resolve_key(const CompletionRequest& req) const;

    mutable std::mutex mutex_;
    std::map<std::string, Entry> entries_;
    std::vector<Matcher> matchers_;
    std::vector<RecordedRequest> log_;
    long token_ceiling_;
};

// --------------------------------------------------------------------------
// Live HTTP backend (chat-completions shape)
// --------------------------------------------------------------------------

struct HttpBackendConfig {
    std::string endpoint;    // e.g. "http://127.0.0.1:8080/v1/chat/completions"
    std::string model;
    std::string api_key_env; // env var holding the bearer token; may be empty
    double temperature = 1.0;
    long max_tokens = 4096;
    long token_ceiling = kDefaultTokenCeiling;
    int timeout_seconds = 120;
};

class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpBackendConfig config);
    Completion complete(const CompletionRequest& req) override;

private:
    HttpBackendConfig config_;
    std::string scheme_host_port_;
    std::string path_;
};

void enforce_token_ceiling(const CompletionRequest& req, long ceiling);

} // namespace triad
