#pragma once
// Minimal MCP-style tool protocol: JSON-RPC 2.0 envelopes, one per line.
//
// Three methods are required: initialize, tools/list, tools/call. The
// client serializes writes and demultiplexes replies by id, so one
// connection can serve a full worker wave concurrently. External servers
// ride stdio; tests use an in-process mock server behind a loopback
// transport that still speaks the wire format, so transcripts stay
// byte-comparable.

#include "triad/errors.hpp"

#include <json.hpp>

#include <condition_variable>
#include <deque>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace triad {

constexpr const char* kMcpProtocolVersion = "2024-11-05";

struct ToolDescriptor {
    std::string name;
    std::string description;
    nlohmann::json input_schema;

    nlohmann::json to_json() const;
    static ToolDescriptor from_json(const nlohmann::json& doc);
};

struct ToolCall {
    std::string tool_name;
    nlohmann::json arguments;
    int call_index = 0;
};

struct ToolResult {
    nlohmann::json payload; // text or structured document
    bool is_error = false;

    std::string text() const; // payload as flat text
};

namespace rpc_error {
constexpr int kParseError = -32700;
constexpr int kMethodNotFound = -32601;
constexpr int kToolNotFound = -32001;
} // namespace rpc_error

class Transport {
public:
    virtual ~Transport() = default;
    virtual void send_line(const std::string& line) = 0;
    virtual bool recv_line(std::string& line) = 0; // false on EOF/close
    virtual void close() = 0;
};

// --------------------------------------------------------------------------
// Mock tool server. Fixture file:
//   {
//     "server_name": "mock-tools",
//     "tools": [{"name": ..., "description": ..., "input_schema": {...}}],
//     "responses": {
//       "<tool>:<digest8>": [{"text": "...", "is_error": false}, ...],
//       "<tool>:*":         {"repeat": [{"text": "..."}]}
//     }
//   }
// The digest is fnv1a64_hex8 of the canonical (sorted-key) argument dump;
// "<tool>:*" matches any arguments. Lists are consumed in order.
// --------------------------------------------------------------------------
class MockToolServer {
public:
    explicit MockToolServer(const nlohmann::json& fixture);
    static MockToolServer from_file(const std::string& path);

    // Full envelope handling; returns empty string for notifications.
    std::string handle_line(const std::string& line);
    nlohmann::json handle(const nlohmann::json& request);

    int tool_count() const { return (int)tools_.size(); }

    static std::string argument_digest(const nlohmann::json& arguments);

private:
    struct ResponseQueue {
        std::vector<nlohmann::json> replies;
        bool repeat = false;
        size_t cursor = 0;
    };

    nlohmann::json next_response(const std::string& tool, const nlohmann::json& arguments);

    std::string server_name_ = "mock-tools";
    std::vector<ToolDescriptor> tools_;
    std::map<std::string, ResponseQueue> responses_;
    std::mutex mutex_;
};

class LoopbackTransport : public Transport {
public:
    explicit LoopbackTransport(std::shared_ptr<MockToolServer> server);
    void send_line(const std::string& line) override;
    bool recv_line(std::string& line) override;
    void close() override;

private:
    std::shared_ptr<MockToolServer> server_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<std::string> inbox_;
    bool closed_ = false;
};

// Spawns `argv` and frames envelopes over its stdin/stdout.
class StdioTransport : public Transport {
public:
    explicit StdioTransport(const std::vector<std::string>& argv);
    ~StdioTransport() override;
    void send_line(const std::string& line) override;
    bool recv_line(std::string& line) override;
    void close() override;

private:
    int child_pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
    std::mutex write_mutex_;
};

// Decorator that logs every line for golden-transcript tests:
// "C <line>" for client->server, "S <line>" for server->client.
class RecordingTransport : public Transport {
public:
    RecordingTransport(std::unique_ptr<Transport> inner, std::vector<std::string>* log);
    void send_line(const std::string& line) override;
    bool recv_line(std::string& line) override;
    void close() override;

private:
    std::unique_ptr<Transport> inner_;
    std::vector<std::string>* log_;
    std::mutex mutex_;
};

struct ServerSummary {
    std::string name;
    std::string protocol_version;
    int tool_count = 0;
};

class ToolClient {
public:
    explicit ToolClient(std::unique_ptr<Transport> transport);
    ~ToolClient();

    ToolClient(const ToolClient&) = delete;
    ToolClient& operator=(const ToolClient&) = delete;

    ServerSummary initialize();                  // HandshakeFailed
    std::vector<ToolDescriptor> list_tools();    // TransportError
    ToolResult call_tool(const std::string& name, const nlohmann::json& arguments);

    bool initialized() const { return initialized_; }

private:
    nlohmann::json request(const std::string& method, const nlohmann::json& params);
    void notify(const std::string& method, const nlohmann::json& params);
    void reader_loop();
    void fail_pending(const std::string& reason);

    std::unique_ptr<Transport> transport_;
    std::thread reader_;
    std::mutex write_mutex_;
    std::mutex pending_mutex_;
    std::map<long, std::promise<nlohmann::json>> pending_;
    long next_id_ = 1;
    bool initialized_ = false;
    bool reader_running_ = false;
};

} // namespace triad
