#pragma once

#include <stdexcept>
#include <string>

namespace triad {

enum class ErrorCode {
    IndexGap,
    MalformedAction,
    UnknownManager,
    BackendUnavailable,
    TokenLimitExceeded,
    ScriptExhausted,
    PlanningFailed,
    DecompositionFailed,
    StepFailed,
    TaskFailed,
    HandshakeFailed,
    UnknownTool,
    TransportError,
    SinkUnavailable,
    TruncatedTrace,
    MissingDurations,
    ScenarioInvalid,
    ConfigInvalid,
};

const char* to_string(ErrorCode code);

class EngineError : public std::runtime_error {
public:
    EngineError(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

} // namespace triad
