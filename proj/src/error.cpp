#include "oasis/error.hpp"

namespace oasis {

std::string_view code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::MalformedInput: return "MalformedInput";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::DegenerateGrid: return "DegenerateGrid";
        case ErrorCode::TooFewTrajectories: return "TooFewTrajectories";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::EmptySequence: return "EmptySequence";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::ZeroGamma: return "ZeroGamma";
        case ErrorCode::OddDimension: return "OddDimension";
        case ErrorCode::NonFiniteLogits: return "NonFiniteLogits";
        case ErrorCode::InvalidRange: return "InvalidRange";
        case ErrorCode::StepOutOfRange: return "StepOutOfRange";
        case ErrorCode::UnfittedNormalizer: return "UnfittedNormalizer";
        case ErrorCode::NonFiniteInput: return "NonFiniteInput";
        case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
        case ErrorCode::DivergedLoss: return "DivergedLoss";
        case ErrorCode::NetworkError: return "NetworkError";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::EmptyResponse: return "EmptyResponse";
        case ErrorCode::TooFewEvents: return "TooFewEvents";
        case ErrorCode::DegenerateFit: return "DegenerateFit";
        case ErrorCode::UnfittedModel: return "UnfittedModel";
        case ErrorCode::TooFewPoints: return "TooFewPoints";
        case ErrorCode::SingularSystem: return "SingularSystem";
        case ErrorCode::RankDeficientLocalFit: return "RankDeficientLocalFit";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
        case ErrorCode::VersionMismatch: return "VersionMismatch";
        case ErrorCode::OutOfRegion: return "OutOfRegion";
        case ErrorCode::TideUnavailable: return "TideUnavailable";
        case ErrorCode::MalformedHeader: return "MalformedHeader";
        case ErrorCode::UnknownModel: return "UnknownModel";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

}  // namespace oasis
