#pragma once
#include <stdexcept>
#include <string>
#include <string_view>

namespace autoresearch {

// Every failure the framework reports carries one of these codes. The HTTP
// API and the CLI surface the code name verbatim.
enum class ErrorCode {
    InvalidArgument,
    // corpus
    MissingTitle,
    EmptyExtraction,
    ParseError,
    ProviderUnavailable,
    MalformedResponse,
    // idea
    EmptyPlan,
    SchemaError,
    // gateway
    TransientProviderError,
    ProviderError,
    BudgetExhausted,
    SessionMismatch,
    SessionExhausted,
    // workspace
    InvalidPath,
    SourceMissing,
    FileMissing,
    RangeTooLarge,
    InvalidRange,
    NoHistory,
    TimedOut,
    PolicyViolation,
    // protocol
    DuplicateTool,
    MissingHeader,
    UnknownTool,
    MalformedInput,
    // ml toolkit
    HubUnavailable,
    NoMatch,
    WriteError,
    CountMismatch,
    TransformFailed,
    TrainFailed,
    MissingEntrypoint,
    ArtifactMissing,
    ExecFailed,
    RowMismatch,
    UnknownMetric,
    // evaluation
    ScoreOutOfRange,
    ZeroBaseline,
    EmptyTrials,
    EmptyMap,
    // run store
    UnknownRun,
    StorageError,
    RunTerminal,
    RunNotAttached,
    FeedbackTimeout,
    Unauthorized,
};

std::string_view code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

} // namespace autoresearch
