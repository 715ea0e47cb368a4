#include "triad/mcp.hpp"
#include "triad/text.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstring>
#include <mutex>

namespace triad {

using nlohmann::json;

json ToolDescriptor::to_json() const {
    return json{{"name", name}, {"description", description}, {"inputSchema", input_schema}};
}

ToolDescriptor ToolDescriptor::from_json(const json& doc) {
    ToolDescriptor descriptor;
    descriptor.name = doc.at("name").get<std::string>();
    descriptor.description = doc.value("description", "");
    if (doc.contains("inputSchema")) descriptor.input_schema = doc["inputSchema"];
    else if (doc.contains("input_schema")) descriptor.input_schema = doc["input_schema"];
    return descriptor;
}

std::string ToolResult::text() const {
    if (payload.is_string()) return payload.get<std::string>();
    return payload.dump();
}

// ---------------------------------------------------------------------------
// MockToolServer
// ---------------------------------------------------------------------------

MockToolServer::MockToolServer(const json& fixture) {
    if (!fixture.is_object()) {
        throw EngineError(ErrorCode::ConfigInvalid, "tool fixture must be a JSON object");
    }
    server_name_ = fixture.value("server_name", "mock-tools");
    if (fixture.contains("tools")) {
        for (const auto& t : fixture["tools"]) {
            ToolDescriptor descriptor = ToolDescriptor::from_json(t);
            for (const auto& existing : tools_) {
                if (existing.name == descriptor.name) {
                    throw EngineError(ErrorCode::ConfigInvalid,
                                      "duplicate tool name in fixture: " + descriptor.name);
                }
            }
            tools_.push_back(std::move(descriptor));
        }
    }
    if (fixture.contains("responses")) {
        for (const auto& [key, value] : fixture["responses"].items()) {
            ResponseQueue queue;
            const json* list = &value;
            if (value.is_object() && value.contains("repeat")) {
                queue.repeat = true;
                list = &value["repeat"];
            }
            if (!list->is_array()) {
                throw EngineError(ErrorCode::ConfigInvalid,
                                  "fixture responses for '" + key + "' must be an array");
            }
            for (const auto& r : *list) {
                if (r.value("is_error", false) && trim(r.value("text", "")).empty()) {
                    throw EngineError(ErrorCode::ConfigInvalid,
                                      "error response under '" + key + "' needs a message");
                }
                queue.replies.push_back(r);
            }
            responses_[key] = std::move(queue);
        }
    }
}

MockToolServer MockToolServer::from_file(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw EngineError(ErrorCode::ConfigInvalid, "fixture " + path + ": " + e.what());
    }
    return MockToolServer(doc);
}

std::string MockToolServer::argument_digest(const json& arguments) {
    return fnv1a64_hex8(arguments.is_null() ? "null" : arguments.dump());
}

json MockToolServer::next_response(const std::string& tool, const json& arguments) {
    std::string exact = tool + ":" + argument_digest(arguments);
    std::string wildcard = tool + ":*";
    for (const std::string& key : {exact, wildcard}) {
        auto it = responses_.find(key);
        if (it == responses_.end()) continue;
        ResponseQueue& queue = it->second;
        if (queue.cursor >= queue.replies.size()) {
            if (queue.repeat) queue.cursor = 0;
            else continue; // exhausted; fall through to the wildcard or error
        }
        return queue.replies[queue.cursor++];
    }
    return json{{"text", "fixture has no response for " + tool + " with digest " +
                             argument_digest(arguments)},
                {"is_error", true}};
}

static json make_result(const json& id, json result) {
    return json{{"id", id}, {"jsonrpc", "2.0"}, {"result", std::move(result)}};
}

static json make_error(const json& id, int code, const std::string& message) {
    return json{{"id", id}, {"jsonrpc", "2.0"},
                {"error", json{{"code", code}, {"message", message}}}};
}

json MockToolServer::handle(const json& request) {
    std::lock_guard<std::mutex> lock(mutex_);
    json id = request.contains("id") ? request["id"] : json();
    std::string method = request.value("method", "");

    if (method == "initialize") {
        return make_result(id, json{{"capabilities", json{{"tools", json::object()}}},
                                    {"protocolVersion", kMcpProtocolVersion},
                                    {"serverInfo", json{{"name", server_name_}, {"version", "0.1.0"}}},
                                    {"toolCount", (int)tools_.size()}});
    }
    if (method == "notifications/initialized") {
        return json(); // notification, no reply
    }
    if (method == "tools/list") {
        json tools = json::array();
        for (const auto& t : tools_) tools.push_back(t.to_json());
        return make_result(id, json{{"tools", tools}});
    }
    if (method == "tools/call") {
        std::string name = request.value("params", json::object()).value("name", "");
        json arguments = request.value("params", json::object()).value("arguments", json::object());
        bool known = false;
        for (const auto& t : tools_) known = known || t.name == name;
        if (!known) {
            return make_error(id, rpc_error::kToolNotFound, "unknown tool: " + name);
        }
        json reply = next_response(name, arguments);
        bool is_error = reply.value("is_error", false);
        std::string text =
            reply.contains("text") ? reply["text"].get<std::string>()
                                   : (reply.contains("payload") ? reply["payload"].dump() : "");
        return make_result(id, json{{"content", json::array({json{{"text", text}, {"type", "text"}}})},
                                    {"isError", is_error}});
    }
    return make_error(id, rpc_error::kMethodNotFound, "unknown method: " + method);
}

std::string MockToolServer::handle_line(const std::string& line) {
    json request;
    try {
        request = json::parse(line);
    } catch (const json::exception& e) {
        return make_error(json(), rpc_error::kParseError, e.what()).dump();
    }
    json response = handle(request);
    if (response.is_null()) return "";
    return response.dump();
}

// ---------------------------------------------------------------------------
// LoopbackTransport
// ---------------------------------------------------------------------------

LoopbackTransport::LoopbackTransport(std::shared_ptr<MockToolServer> server)
    : server_(std::move(server)) {}

void LoopbackTransport::send_line(const std::string& line) {
    std::string response;
    {
        std::lock_guard<std::mutex> lock(mutex_);
        if (closed_) throw EngineError(ErrorCode::TransportError, "transport closed");
    }
    response = server_->handle_line(line);
    if (response.empty()) return;
    {
        std::lock_guard<std::mutex> lock(mutex_);
        inbox_.push_back(std::move(response));
    }
    cv_.notify_all();
}

bool LoopbackTransport::recv_line(std::string& line) {
    std::unique_lock<std::mutex> lock(mutex_);
    cv_.wait(lock, [&] { return closed_ || !inbox_.empty(); });
    if (!inbox_.empty()) {
        line = std::move(inbox_.front());
        inbox_.pop_front();
        return true;
    }
    return false;
}

void LoopbackTransport::close() {
    {
        std::lock_guard<std::mutex> lock(mutex_);
        closed_ = true;
    }
    cv_.notify_all();
}

// ---------------------------------------------------------------------------
// StdioTransport
// ---------------------------------------------------------------------------

StdioTransport::StdioTransport(const std::vector<std::string>& argv) {
    if (argv.empty()) throw EngineError(ErrorCode::ConfigInvalid, "stdio transport needs a command");
    // A server dying mid-write must surface as TransportError, not SIGPIPE.
    static std::once_flag sigpipe_once;
    std::call_once(sigpipe_once, [] { signal(SIGPIPE, SIG_IGN); });
    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0) {
        throw EngineError(ErrorCode::TransportError, "pipe() failed");
    }
    pid_t pid = fork();
    if (pid < 0) throw EngineError(ErrorCode::TransportError, "fork() failed");
    if (pid == 0) {
        dup2(to_child[0], STDIN_FILENO);
        dup2(from_child[1], STDOUT_FILENO);
        ::close(to_child[0]);
        ::close(to_child[1]);
        ::close(from_child[0]);
        ::close(from_child[1]);
        std::vector<char*> args;
        args.reserve(argv.size() + 1);
        for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
        args.push_back(nullptr);
        execvp(args[0], args.data());
        _exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    child_pid_ = pid;
    to_child_ = to_child[1];
    from_child_ = from_child[0];
}

StdioTransport::~StdioTransport() {
    close();
    if (from_child_ >= 0) {
        ::close(from_child_);
        from_child_ = -1;
    }
}

void StdioTransport::send_line(const std::string& line) {
    std::lock_guard<std::mutex> lock(write_mutex_);
    if (to_child_ < 0) throw EngineError(ErrorCode::TransportError, "transport closed");
    std::string framed = line + "\n";
    size_t written = 0;
    while (written < framed.size()) {
        ssize_t n = write(to_child_, framed.data() + written, framed.size() - written);
        if (n <= 0) throw EngineError(ErrorCode::TransportError, "write to tool server failed");
        written += (size_t)n;
    }
}

bool StdioTransport::recv_line(std::string& line) {
    // Reader-thread only; EOF arrives when the child exits.
    while (true) {
        auto newline = buffer_.find('\n');
        if (newline != std::string::npos) {
            line = buffer_.substr(0, newline);
            buffer_.erase(0, newline + 1);
            return true;
        }
        if (from_child_ < 0) return false;
        char chunk[4096];
        ssize_t n = read(from_child_, chunk, sizeof(chunk));
        if (n <= 0) return false;
        buffer_.append(chunk, (size_t)n);
    }
}

void StdioTransport::close() {
    // Closes the write side and reaps the child; the child's exit delivers
    // EOF to the reader, which is why the read fd stays open here: it is
    // owned by the reader thread until destruction.
    std::lock_guard<std::mutex> lock(write_mutex_);
    if (to_child_ >= 0) {
        ::close(to_child_);
        to_child_ = -1;
    }
    if (child_pid_ > 0) {
        int status = 0;
        if (waitpid(child_pid_, &status, WNOHANG) == 0) {
            kill(child_pid_, SIGTERM);
            waitpid(child_pid_, &status, 0);
        }
        child_pid_ = -1;
    }
}

// ---------------------------------------------------------------------------
// RecordingTransport
// ---------------------------------------------------------------------------

RecordingTransport::RecordingTransport(std::unique_ptr<Transport> inner,
                                       std::vector<std::string>* log)
    : inner_(std::move(inner)), log_(log) {}

void RecordingTransport::send_line(const std::string& line) {
    {
        std::lock_guard<std::mutex> lock(mutex_);
        if (log_ != nullptr) log_->push_back("C " + line);
    }
    inner_->send_line(line);
}

bool RecordingTransport::recv_line(std::string& line) {
    if (!inner_->recv_line(line)) return false;
    std::lock_guard<std::mutex> lock(mutex_);
    if (log_ != nullptr) log_->push_back("S " + line);
    return true;
}

void RecordingTransport::close() { inner_->close(); }

// ---------------------------------------------------------------------------
// ToolClient
// ---------------------------------------------------------------------------

ToolClient::ToolClient(std::unique_ptr<Transport> transport) : transport_(std::move(transport)) {
    reader_ = std::thread([this] { reader_loop(); });
    reader_running_ = true;
}

ToolClient::~ToolClient() {
    transport_->close();
    if (reader_.joinable()) reader_.join();
}

void ToolClient::reader_loop() {
    std::string line;
    while (transport_->recv_line(line)) {
        json doc;
        try {
            doc = json::parse(line);
        } catch (const json::exception&) {
            continue; // non-envelope noise on the stream
        }
        if (!doc.contains("id") || doc["id"].is_null()) continue;
        long id = doc["id"].get<long>();
        std::promise<json> promise;
        {
            std::lock_guard<std::mutex> lock(pending_mutex_);
            auto it = pending_.find(id);
            if (it == pending_.end()) continue;
            promise = std::move(it->second);
            pending_.erase(it);
        }
        promise.set_value(std::move(doc));
    }
    fail_pending("transport closed");
}

void ToolClient::fail_pending(const std::string& reason) {
    std::lock_guard<std::mutex> lock(pending_mutex_);
    for (auto& [id, promise] : pending_) {
        (void)id;
        promise.set_exception(
            std::make_exception_ptr(EngineError(ErrorCode::TransportError, reason)));
    }
    pending_.clear();
}

json ToolClient::request(const std::string& method, const json& params) {
    long id = 0;
    std::future<json> future;
    std::string line;
    {
        std::lock_guard<std::mutex> lock(write_mutex_);
        id = next_id_++;
        json envelope = {{"id", id}, {"jsonrpc", "2.0"}, {"method", method}, {"params", params}};
        line = envelope.dump();
        {
            std::lock_guard<std::mutex> pending_lock(pending_mutex_);
            future = pending_[id].get_future();
        }
        try {
            transport_->send_line(line);
        } catch (...) {
            std::lock_guard<std::mutex> pending_lock(pending_mutex_);
            pending_.erase(id);
            throw;
        }
    }
    json response = future.get(); // rethrows TransportError on close
    if (response.contains("error")) {
        int code = response["error"].value("code", 0);
        std::string message = response["error"].value("message", "");
        if (code == rpc_error::kToolNotFound) {
            throw EngineError(ErrorCode::UnknownTool, message);
        }
        throw EngineError(ErrorCode::TransportError,
                          "rpc error " + std::to_string(code) + ": " + message);
    }
    return response.value("result", json::object());
}

void ToolClient::notify(const std::string& method, const json& params) {
    std::lock_guard<std::mutex> lock(write_mutex_);
    json envelope = {{"jsonrpc", "2.0"}, {"method", method}, {"params", params}};
    transport_->send_line(envelope.dump());
}

ServerSummary ToolClient::initialize() {
    json result;
    try {
        result = request("initialize",
                         json{{"clientInfo", json{{"name", "triad"}, {"version", "0.1.0"}}},
                              {"protocolVersion", kMcpProtocolVersion}});
        notify("notifications/initialized", json::object());
    } catch (const EngineError& e) {
        throw EngineError(ErrorCode::HandshakeFailed, e.what());
    }
    ServerSummary summary;
    summary.protocol_version = result.value("protocolVersion", "");
    summary.tool_count = result.value("toolCount", 0);
    if (result.contains("serverInfo")) summary.name = result["serverInfo"].value("name", "");
    initialized_ = true;
    return summary;
}

std::vector<ToolDescriptor> ToolClient::list_tools() {
    if (!initialized_) throw EngineError(ErrorCode::TransportError, "client not initialized");
    json result = request("tools/list", json::object());
    std::vector<ToolDescriptor> tools;
    for (const auto& t : result.value("tools", json::array())) {
        tools.push_back(ToolDescriptor::from_json(t));
    }
    return tools;
}

ToolResult ToolClient::call_tool(const std::string& name, const json& arguments) {
    if (!initialized_) throw EngineError(ErrorCode::TransportError, "client not initialized");
    json result = request("tools/call", json{{"arguments", arguments}, {"name", name}});
    ToolResult tool_result;
    tool_result.is_error = result.value("isError", false);
    std::string text;
    for (const auto& item : result.value("content", json::array())) {
        if (item.value("type", "") == "text") {
            if (!text.empty()) text += "\n";
            text += item.value("text", "");
        }
    }
    tool_result.payload = text;
    return tool_result;
}

} // namespace triad
