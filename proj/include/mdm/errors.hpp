#pragma once

#include <stdexcept>
#include <string>

namespace mdm {

enum class ErrorCode {
    OutOfRangeBias,
    NonPhysicalFit,
    ForwardBiasLimit,
    HeaterOverdrive,
    StepSizeUnderflow,
    BadSeed,
    BadArgument,
    EdgeTooSlow,
    OffsetTooLarge,
    NoResonanceFound,
    FitDiverged,
    DegenerateT0,
    InsufficientPoints,
    BadDomain,
    TraceTooShort,
    InsufficientTransitions,
    ChirpTooFast,
    MisalignedTraces,
    Schema,
    Io,
};

[[nodiscard]] constexpr const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::OutOfRangeBias: return "OutOfRangeBias";
        case ErrorCode::NonPhysicalFit: return "NonPhysicalFit";
        case ErrorCode::ForwardBiasLimit: return "ForwardBiasLimit";
        case ErrorCode::HeaterOverdrive: return "HeaterOverdrive";
        case ErrorCode::StepSizeUnderflow: return "StepSizeUnderflow";
        case ErrorCode::BadSeed: return "BadSeed";
        case ErrorCode::BadArgument: return "BadArgument";
        case ErrorCode::EdgeTooSlow: return "EdgeTooSlow";
        case ErrorCode::OffsetTooLarge: return "OffsetTooLarge";
        case ErrorCode::NoResonanceFound: return "NoResonanceFound";
        case ErrorCode::FitDiverged: return "FitDiverged";
        case ErrorCode::DegenerateT0: return "DegenerateT0";
        case ErrorCode::InsufficientPoints: return "InsufficientPoints";
        case ErrorCode::BadDomain: return "BadDomain";
        case ErrorCode::TraceTooShort: return "TraceTooShort";
        case ErrorCode::InsufficientTransitions: return "InsufficientTransitions";
        case ErrorCode::ChirpTooFast: return "ChirpTooFast";
        case ErrorCode::MisalignedTraces: return "MisalignedTraces";
        case ErrorCode::Schema: return "Schema";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

/// Input-side errors (bad files, schemas, arguments) as opposed to numerical failures.
[[nodiscard]] constexpr bool is_input_error(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::Schema:
        case ErrorCode::Io:
        case ErrorCode::BadArgument:
        case ErrorCode::BadSeed:
        case ErrorCode::EdgeTooSlow:
        case ErrorCode::OffsetTooLarge:
        case ErrorCode::HeaterOverdrive:
        case ErrorCode::OutOfRangeBias:
            return true;
        default:
            return false;
    }
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace mdm
