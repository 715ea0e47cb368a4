#include "triad/errors.hpp"

namespace triad {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::IndexGap:            return "IndexGap";
        case ErrorCode::MalformedAction:     return "MalformedAction";
        case ErrorCode::UnknownManager:      return "UnknownManager";
        case ErrorCode::BackendUnavailable:  return "BackendUnavailable";
        case ErrorCode::TokenLimitExceeded:  return "TokenLimitExceeded";
        case ErrorCode::ScriptExhausted:     return "ScriptExhausted";
        case ErrorCode::PlanningFailed:      return "PlanningFailed";
        case ErrorCode::DecompositionFailed: return "DecompositionFailed";
        case ErrorCode::StepFailed:          return "StepFailed";
        case ErrorCode::TaskFailed:          return "TaskFailed";
        case ErrorCode::HandshakeFailed:     return "HandshakeFailed";
        case ErrorCode::UnknownTool:         return "UnknownTool";
        case ErrorCode::TransportError:      return "TransportError";
        case ErrorCode::SinkUnavailable:     return "SinkUnavailable";
        case ErrorCode::TruncatedTrace:      return "TruncatedTrace";
        case ErrorCode::MissingDurations:    return "MissingDurations";
        case ErrorCode::ScenarioInvalid:     return "ScenarioInvalid";
        case ErrorCode::ConfigInvalid:       return "ConfigInvalid";
    }
    return "UnknownError";
}

} // namespace triad
