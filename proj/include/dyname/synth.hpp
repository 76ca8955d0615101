#pragma once

#include "dyname/series.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dyname {

enum class WaveShape { sine, profile };

/// A periodic term. `profile` draws a smoothed random cycle from `profile_seed`
/// (zero mean, unit RMS) instead of a sine.
struct PeriodicComponent {
    Index period = 24;
    double amplitude = 1.0;
    double phase = 0.0;
    WaveShape shape = WaveShape::sine;
    std::uint64_t profile_seed = 0;
};

/// One entry of a cyclic regime schedule. Its components and offset are added
/// on top of the base components while it is active.
struct Regime {
    std::string name;
    Index duration = 1;
    double offset = 0.0;
    std::vector<PeriodicComponent> components;
};

enum class ShockShape { level, spike, ramp, pattern };

/// A one-off event. duration == 0 means persistent (level, pattern) or one
/// step (spike); ramps reach `magnitude` after `duration` steps and stay.
struct Shock {
    Index time = 0;
    ShockShape shape = ShockShape::level;
    double magnitude = 1.0;
    Index duration = 0;
    Index period = 0; // pattern only
};

struct SynthSpec {
    Index length = 2000;
    Index channels = 1;
    double base = 0.0;
    double trend = 0.0;
    double noise = 0.0;
    /// Channel c shifts each component by a seeded fraction (up to this) of its period.
    double channel_jitter = 0.0;
    std::uint64_t seed = 0;
    std::vector<PeriodicComponent> components;
    std::vector<Regime> regimes;
    std::vector<Shock> shocks;

    void validate() const;
};

struct SynthEvent {
    Index time = 0;
    std::string kind;  // "recurring" or "emergent"
    std::string label;
};

struct SynthStream {
    SeriesStore store;
    std::vector<SynthEvent> events;
};

SynthStream synth_stream(const SynthSpec& spec);

/// Named scenarios: two-period, two-profile, shock, weekly-regime, alternating-periods, etth2-like.
SynthSpec synth_preset(std::string_view name, std::uint64_t seed = 0);
std::vector<std::string> synth_preset_names();

SynthSpec parse_synth_spec(std::string_view toml_text);

std::string_view to_string(ShockShape s) noexcept;
nlohmann::json to_json(const SynthSpec& spec);
nlohmann::json events_json(const SynthStream& stream);

/// Writes the CSV and a `<stem>.events.json` sidecar next to it; returns the sidecar path.
std::filesystem::path write_synth(const std::filesystem::path& csv_path, const SynthStream& stream,
                                  const SynthSpec& spec);

} // namespace dyname
