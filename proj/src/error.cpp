#include "fcst/error.hpp"

namespace fcst {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::MissingColumn: return "MissingColumn";
        case ErrorCode::EmptySeries: return "EmptySeries";
        case ErrorCode::SeriesTooShort: return "SeriesTooShort";
        case ErrorCode::BadFractions: return "BadFractions";
        case ErrorCode::EmptyTrain: return "EmptyTrain";
        case ErrorCode::BadArtifact: return "BadArtifact";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::BadRate: return "BadRate";
        case ErrorCode::MissingGradient: return "MissingGradient";
        case ErrorCode::BadConfig: return "BadConfig";
        case ErrorCode::NumericError: return "NumericError";
        case ErrorCode::BadCheckpoint: return "BadCheckpoint";
        case ErrorCode::NonFiniteValue: return "NonFiniteValue";
        case ErrorCode::NoShots: return "NoShots";
        case ErrorCode::NotEnoughSamples: return "NotEnoughSamples";
        case ErrorCode::NoJsonFound: return "NoJsonFound";
        case ErrorCode::WrongCount: return "WrongCount";
        case ErrorCode::MalformedNumber: return "MalformedNumber";
        case ErrorCode::AuthError: return "AuthError";
        case ErrorCode::ProviderError: return "ProviderError";
        case ErrorCode::RetriesExhausted: return "RetriesExhausted";
        case ErrorCode::Timeout: return "Timeout";
        case ErrorCode::SpawnFailed: return "SpawnFailed";
        case ErrorCode::HandshakeTimeout: return "HandshakeTimeout";
        case ErrorCode::VersionMismatch: return "VersionMismatch";
        case ErrorCode::BridgeError: return "BridgeError";
        case ErrorCode::ProtocolViolation: return "ProtocolViolation";
        case ErrorCode::BrokenPipe: return "BrokenPipe";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::CountMismatch: return "CountMismatch";
        case ErrorCode::UsageError: return "UsageError";
    }
    return "Unknown";
}

ErrorFamily family_of(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::IoError:
            return ErrorFamily::Io;
        case ErrorCode::UsageError:
        case ErrorCode::BadConfig:
            return ErrorFamily::Usage;
        case ErrorCode::MissingColumn:
        case ErrorCode::EmptySeries:
        case ErrorCode::SeriesTooShort:
        case ErrorCode::BadFractions:
        case ErrorCode::EmptyTrain:
        case ErrorCode::BadArtifact:
            return ErrorFamily::Data;
        case ErrorCode::ShapeMismatch:
        case ErrorCode::BadRate:
        case ErrorCode::MissingGradient:
        case ErrorCode::NumericError:
        case ErrorCode::BadCheckpoint:
            return ErrorFamily::Model;
        case ErrorCode::NonFiniteValue:
        case ErrorCode::NoShots:
        case ErrorCode::NotEnoughSamples:
        case ErrorCode::NoJsonFound:
        case ErrorCode::WrongCount:
        case ErrorCode::MalformedNumber:
        case ErrorCode::AuthError:
        case ErrorCode::ProviderError:
        case ErrorCode::RetriesExhausted:
        case ErrorCode::Timeout:
            return ErrorFamily::Provider;
        case ErrorCode::SpawnFailed:
        case ErrorCode::HandshakeTimeout:
        case ErrorCode::VersionMismatch:
        case ErrorCode::BridgeError:
        case ErrorCode::ProtocolViolation:
        case ErrorCode::BrokenPipe:
            return ErrorFamily::Bridge;
        case ErrorCode::LengthMismatch:
        case ErrorCode::EmptyInput:
        case ErrorCode::CountMismatch:
            return ErrorFamily::Evaluation;
    }
    return ErrorFamily::Io;
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace fcst
