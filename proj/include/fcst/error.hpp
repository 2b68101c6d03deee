#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fcst {

/// Every failure the harness can report. The enumerator names are stable and
/// appear verbatim in CLI diagnostics.
enum class ErrorCode {
    // dataset
    IoError,
    MissingColumn,
    EmptySeries,
    SeriesTooShort,
    BadFractions,
    EmptyTrain,
    BadArtifact,
    // tensor-nn / forecasters
    ShapeMismatch,
    BadRate,
    MissingGradient,
    BadConfig,
    NumericError,
    BadCheckpoint,
    // prompt-forecaster
    NonFiniteValue,
    NoShots,
    NotEnoughSamples,
    NoJsonFound,
    WrongCount,
    MalformedNumber,
    AuthError,
    ProviderError,
    RetriesExhausted,
    Timeout,
    // bridge
    SpawnFailed,
    HandshakeTimeout,
    VersionMismatch,
    BridgeError,
    ProtocolViolation,
    BrokenPipe,
    // evaluation
    LengthMismatch,
    EmptyInput,
    CountMismatch,
    // cli
    UsageError,
};

/// Errors are grouped into families; each family maps to one process exit
/// code (see README "Exit codes").
enum class ErrorFamily { Io = 1, Usage = 2, Data = 3, Model = 4, Provider = 5, Bridge = 6, Evaluation = 7 };

std::string_view to_string(ErrorCode code) noexcept;
ErrorFamily family_of(ErrorCode code) noexcept;

inline int exit_code_for(ErrorCode code) noexcept { return static_cast<int>(family_of(code)); }

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }
    ErrorFamily family() const noexcept { return family_of(code_); }
    /// The message without the code prefix.
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace fcst
