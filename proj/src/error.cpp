#include "dyname/error.hpp"

namespace dyname {

std::string_view to_string(Errc code) noexcept {
    switch (code) {
    case Errc::MalformedRow: return "MalformedRow";
    case Errc::EmptySeries: return "EmptySeries";
    case Errc::ConstantChannel: return "ConstantChannel";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::DegenerateSpectrum: return "DegenerateSpectrum";
    case Errc::NoValidSamples: return "NoValidSamples";
    case Errc::ZeroVariance: return "ZeroVariance";
    case Errc::SingularSystem: return "SingularSystem";
    case Errc::NonFiniteGradient: return "NonFiniteGradient";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::InsufficientHistory: return "InsufficientHistory";
    case Errc::MissingColumn: return "MissingColumn";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
    }
    return "Unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

void fail(Errc code, const std::string& what) {
    throw Error(code, what);
}

} // namespace dyname
