#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "triad/backends.hpp"
#include "triad/text.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cstdlib>
#include <random>
#include <thread>

using namespace triad;
using nlohmann::json;

namespace {

CompletionRequest request_for(Role role, const std::string& last_entry) {
    CompletionRequest req;
    req.role = role;
    req.transcript.push_back(Turn{"user", last_entry});
    return req;
}

} // namespace

TEST_CASE("estimate_tokens: empty, band, monotonicity") {
    CHECK(estimate_tokens("") == 0);
    CHECK(estimate_tokens("a") == 1);

    std::string four_k(4000, 'x');
    long estimate = estimate_tokens(four_k);
    CHECK(estimate == 1000); // chars/4
    CHECK(estimate >= 500);
    CHECK(estimate <= 2000);

    std::mt19937 rng(7);
    for (int i = 0; i < 200; ++i) {
        std::string s(rng() % 64, 'a' + (char)(rng() % 26));
        std::string t(rng() % 64, 'a' + (char)(rng() % 26));
        CHECK(estimate_tokens(s + t) >= estimate_tokens(s));
        CHECK(estimate_tokens(s + t) >= estimate_tokens(t));
    }
}

TEST_CASE("scripted backend: computed key lookup and ordered consumption") {
    std::string key = std::string("host:") + fnv1a64_hex8(nfc_normalize("ping"));
    json script = {{"responses", {{key, json::array({"pong one", "pong two"})}}}};
    ScriptedBackend backend(script);

    CHECK(backend.complete(request_for(Role::HOST, "ping")).text == "pong one");
    CHECK(backend.complete(request_for(Role::HOST, "ping")).text == "pong two");
    CHECK_THROWS_AS(backend.complete(request_for(Role::HOST, "ping")), EngineError);
}

TEST_CASE("scripted backend: explicit-key matchers override") {
    json script = {
        {"responses", {{"host:step1", json::array({R"({"kind":"STOP"})"})}}},
        {"matchers",
         json::array({{{"role", "host"}, {"contains", "please plan"}, {"key", "host:step1"}}})}};
    ScriptedBackend backend(script);
    Completion completion = backend.complete(request_for(Role::HOST, "now please plan the next step"));
    CHECK(completion.text == R"({"kind":"STOP"})");

    // Role mismatch must not match.
    CHECK_THROWS_AS(backend.complete(request_for(Role::WORKER, "please plan")), EngineError);
}

TEST_CASE("scripted backend: matcher needles are ANDed over the transcript") {
    json script = {{"responses", {{"worker:a", json::array({"A"})}, {"worker:b", json::array({"B"})}}},
                   {"matchers", json::array({
                        {{"role", "worker"}, {"contains", json::array({"alpha", "beta"})}, {"key", "worker:a"}},
                        {{"role", "worker"}, {"contains", json::array({"alpha"})}, {"key", "worker:b"}},
                    })}};
    ScriptedBackend backend(script);
    CompletionRequest req;
    req.role = Role::WORKER;
    req.transcript.push_back(Turn{"user", "alpha subtask"});
    req.transcript.push_back(Turn{"tool", "result mentioning beta"});
    CHECK(backend.complete(req).text == "A"); // both needles across turns
    CHECK(backend.complete(request_for(Role::WORKER, "alpha only")).text == "B");
}

TEST_CASE("scripted backend: repeat entries cycle") {
    json script = {{"responses", {{"worker:probe", {{"repeat", json::array({"done"})}}}}},
                   {"matchers", json::array({{{"role", "worker"},
                                              {"contains", "probe"},
                                              {"key", "worker:probe"}}})}};
    ScriptedBackend backend(script);
    for (int i = 0; i < 5; ++i) {
        CHECK(backend.complete(request_for(Role::WORKER, "probe 1")).text == "done");
    }
}

TEST_CASE("scripted backend rejects matcher referencing a missing key") {
    json script = {{"responses", json::object()},
                   {"matchers", json::array({{{"role", "host"},
                                              {"contains", "x"},
                                              {"key", "host:absent"}}})}};
    CHECK_THROWS_AS(ScriptedBackend{script}, EngineError);
}

TEST_CASE("token ceiling raises TokenLimitExceeded pre-flight") {
    CHECK(kDefaultTokenCeiling == 272000);
    json script = {{"responses", {{"worker:x", {{"repeat", json::array({"ok"})}}}}},
                   {"matchers", json::array({{{"role", "worker"},
                                              {"contains", "padding"},
                                              {"key", "worker:x"}}})}};
    ScriptedBackend backend(script, 100); // 100-token ceiling for the test
    CompletionRequest small = request_for(Role::WORKER, "padding small");
    CHECK(backend.complete(small).text == "ok");

    CompletionRequest big = request_for(Role::WORKER, "padding " + std::string(1000, 'x'));
    try {
        backend.complete(big);
        FAIL("expected TokenLimitExceeded");
    } catch (const EngineError& e) {
        CHECK(e.code() == ErrorCode::TokenLimitExceeded);
    }
}

TEST_CASE("scripted determinism: identical request sequences, identical texts") {
    json script = {{"responses",
                    {{"host:a", json::array({"one", "two"})},
                     {"worker:b", {{"repeat", json::array({"w1", "w2"})}}}}},
                   {"matchers", json::array({
                        {{"role", "host"}, {"contains", "h"}, {"key", "host:a"}},
                        {{"role", "worker"}, {"contains", "w"}, {"key", "worker:b"}},
                    })}};
    auto run = [&] {
        ScriptedBackend backend(script);
        std::vector<std::string> texts;
        texts.push_back(backend.complete(request_for(Role::HOST, "h1")).text);
        texts.push_back(backend.complete(request_for(Role::WORKER, "w1")).text);
        texts.push_back(backend.complete(request_for(Role::HOST, "h2")).text);
        texts.push_back(backend.complete(request_for(Role::WORKER, "w2")).text);
        return texts;
    };
    CHECK(run() == run());
}

TEST_CASE("scripted backend records requests and token counts add up") {
    json script = {{"responses", {{"host:a", {{"repeat", json::array({"reply text"})}}}}},
                   {"matchers", json::array({{{"role", "host"}, {"contains", "q"}, {"key", "host:a"}}})}};
    ScriptedBackend backend(script);
    long total_in = 0, total_out = 0;
    for (int i = 0; i < 4; ++i) {
        Completion c = backend.complete(request_for(Role::HOST, "q " + std::to_string(i)));
        total_in += c.prompt_tokens;
        total_out += c.completion_tokens;
    }
    CHECK(backend.recorded_requests().size() == 4);
    CHECK(total_in > 0);
    CHECK(total_out == 4 * estimate_tokens("reply text"));
}

TEST_CASE("http backend talks to a chat-completions endpoint") {
    httplib::Server server;
    std::string seen_body;
    std::string seen_auth;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_body = req.body;
        seen_auth = req.get_header_value("Authorization");
        json reply = {{"choices", json::array({{{"message", {{"content", "live reply"}}}}})},
                      {"usage", {{"prompt_tokens", 42}, {"completion_tokens", 7}}}};
        res.set_content(reply.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    setenv("TRIAD_TEST_KEY", "sekrit", 1);
    HttpBackendConfig config;
    config.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    config.model = "test-model";
    config.api_key_env = "TRIAD_TEST_KEY";
    HttpBackend backend(config);

    CompletionRequest req;
    req.role = Role::WORKER;
    req.system_prompt = "sys";
    req.transcript.push_back(Turn{"user", "hello"});
    req.transcript.push_back(Turn{"assistant", "hi"});
    req.transcript.push_back(Turn{"tool", "tool says"});

    Completion completion = backend.complete(req);
    CHECK(completion.text == "live reply");
    CHECK(completion.prompt_tokens == 42);  // provider counts win
    CHECK(completion.completion_tokens == 7);
    CHECK(seen_auth == "Bearer sekrit");

    json body = json::parse(seen_body);
    CHECK(body["model"] == "test-model");
    CHECK(body["messages"][0]["role"] == "system");
    CHECK(body["messages"].size() == 4);

    server.stop();
    server_thread.join();
}

TEST_CASE("http backend surfaces transport and status failures") {
    HttpBackendConfig config;
    config.endpoint = "http://127.0.0.1:1/v1/chat/completions"; // nothing listens here
    config.timeout_seconds = 1;
    HttpBackend backend(config);
    CompletionRequest req;
    req.transcript.push_back(Turn{"user", "x"});
    try {
        backend.complete(req);
        FAIL("expected BackendUnavailable");
    } catch (const EngineError& e) {
        CHECK(e.code() == ErrorCode::BackendUnavailable);
    }
}

TEST_CASE("unknown completion params are rejected") {
    json script = {{"responses", {{"host:a", json::array({"x"})}}},
                   {"matchers", json::array({{{"role", "host"}, {"contains", "q"}, {"key", "host:a"}}})}};
    ScriptedBackend backend(script);
    CompletionRequest req = request_for(Role::HOST, "q");
    req.params["top_p"] = 0.5;
    CHECK_THROWS_AS(backend.complete(req), EngineError);
    req.params.clear();
    req.params["temperature"] = 1.0;
    req.params["max_tokens"] = 128;
    CHECK_NOTHROW(backend.complete(req));
}
