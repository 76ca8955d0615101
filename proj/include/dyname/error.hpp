#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dyname {

enum class Errc {
    MalformedRow,
    EmptySeries,
    ConstantChannel,
    OutOfRange,
    DegenerateSpectrum,
    NoValidSamples,
    ZeroVariance,
    SingularSystem,
    NonFiniteGradient,
    NonFiniteInput,
    InsufficientHistory,
    MissingColumn,
    ConfigError,
    IoError,
};

std::string_view to_string(Errc code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map them to exit statuses.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what);

    [[nodiscard]] Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] void fail(Errc code, const std::string& what);

} // namespace dyname
