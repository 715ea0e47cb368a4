// Standalone mock tool server: serves a fixture file over stdio using the
// same newline-delimited envelopes as the in-process mock, so the stdio
// transport path can be exercised end to end.

#include "triad/mcp.hpp"
#include "triad/text.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"triad-mock-tools: fixture-driven MCP tool server on stdio"};
    std::string fixture_path;
    app.add_option("--fixture", fixture_path, "fixture file")->required();
    CLI11_PARSE(app, argc, argv);

    try {
        triad::MockToolServer server = triad::MockToolServer::from_file(fixture_path);
        std::string line;
        while (std::getline(std::cin, line)) {
            if (line.empty()) continue;
            std::string response = server.handle_line(line);
            if (response.empty()) continue;
            std::cout << response << "\n";
            std::cout.flush();
        }
    } catch (const triad::EngineError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
