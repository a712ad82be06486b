#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace oasis {

/// Machine-readable failure categories. The names double as the `code`
/// field of HTTP error bodies, so keep them stable.
enum class ErrorCode {
    MalformedInput,
    EmptyInput,
    DegenerateGrid,
    TooFewTrajectories,
    InvalidConfig,
    EmptySequence,
    ShapeMismatch,
    ZeroGamma,
    OddDimension,
    NonFiniteLogits,
    InvalidRange,
    StepOutOfRange,
    UnfittedNormalizer,
    NonFiniteInput,
    EmptyTrainingSet,
    DivergedLoss,
    NetworkError,
    ParseError,
    EmptyResponse,
    TooFewEvents,
    DegenerateFit,
    UnfittedModel,
    TooFewPoints,
    SingularSystem,
    RankDeficientLocalFit,
    LengthMismatch,
    CorruptCheckpoint,
    VersionMismatch,
    OutOfRegion,
    TideUnavailable,
    MalformedHeader,
    UnknownModel,
    IoError,
};

std::string_view code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(code_name(code)) + ": " + message), code_(code), detail_(message) {}

    ErrorCode code() const noexcept { return code_; }
    /// Message without the code prefix.
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

}  // namespace oasis
