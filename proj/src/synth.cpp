#include "dyname/synth.hpp"

#include "dyname/error.hpp"

#include "toml.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace dyname {

namespace {

std::vector<double> random_profile(Index period, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::vector<double> raw(static_cast<std::size_t>(period));
    for (auto& v : raw) v = normal(rng);
    // circular 3-tap smoothing
    std::vector<double> out(raw.size());
    const auto n = raw.size();
    for (std::size_t i = 0; i < n; ++i) out[i] = (raw[(i + n - 1) % n] + 2.0 * raw[i] + raw[(i + 1) % n]) / 4.0;
    double mean = 0.0;
    for (double v : out) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (auto& v : out) {
        v -= mean;
        ss += v * v;
    }
    const double rms = std::sqrt(ss / static_cast<double>(n));
    if (rms > 0.0) {
        for (auto& v : out) v /= rms;
    }
    return out;
}

struct Wave {
    PeriodicComponent comp;
    std::vector<double> profile;

    explicit Wave(const PeriodicComponent& c) : comp(c) {
        if (c.shape == WaveShape::profile) profile = random_profile(c.period, c.profile_seed);
    }

    // shift is a fraction of the period
    double at(Index t, double shift) const {
        const double p = static_cast<double>(comp.period);
        if (comp.shape == WaveShape::sine) {
            return comp.amplitude *
                   std::sin(2.0 * std::numbers::pi * (static_cast<double>(t) / p + shift) + comp.phase);
        }
        const auto offset = static_cast<Index>(std::llround(shift * p + comp.phase / (2.0 * std::numbers::pi) * p));
        Index idx = (t + offset) % comp.period;
        if (idx < 0) idx += comp.period;
        return comp.amplitude * profile[static_cast<std::size_t>(idx)];
    }
};

void validate_component(const PeriodicComponent& c) {
    if (c.period < 2) fail(Errc::ConfigError, "component period must be at least 2");
    if (!std::isfinite(c.amplitude) || !std::isfinite(c.phase)) fail(Errc::ConfigError, "component values must be finite");
}

double shock_value(const Shock& s, Index t) {
    if (t < s.time) return 0.0;
    const Index since = t - s.time;
    switch (s.shape) {
    case ShockShape::level:
        return (s.duration == 0 || since < s.duration) ? s.magnitude : 0.0;
    case ShockShape::spike:
        return since < std::max<Index>(s.duration, 1) ? s.magnitude : 0.0;
    case ShockShape::ramp:
        if (s.duration == 0) return s.magnitude;
        return s.magnitude * std::min(1.0, static_cast<double>(since + 1) / static_cast<double>(s.duration));
    case ShockShape::pattern:
        if (s.duration != 0 && since >= s.duration) return 0.0;
        return s.magnitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(since) / static_cast<double>(s.period));
    }
    return 0.0;
}

} // namespace

void SynthSpec::validate() const {
    if (length < 1) fail(Errc::ConfigError, "synthetic length must be positive");
    if (channels < 1) fail(Errc::ConfigError, "synthetic channel count must be positive");
    if (!(noise >= 0.0) || !std::isfinite(noise)) fail(Errc::ConfigError, "noise must be a finite non-negative value");
    if (!std::isfinite(base) || !std::isfinite(trend)) fail(Errc::ConfigError, "base and trend must be finite");
    if (!(channel_jitter >= 0.0 && channel_jitter <= 1.0)) fail(Errc::ConfigError, "channel_jitter must lie in [0, 1]");
    for (const auto& c : components) validate_component(c);
    for (const auto& r : regimes) {
        if (r.duration < 1) fail(Errc::ConfigError, "regime '" + r.name + "' needs a positive duration");
        if (!std::isfinite(r.offset)) fail(Errc::ConfigError, "regime offset must be finite");
        for (const auto& c : r.components) validate_component(c);
    }
    for (const auto& s : shocks) {
        if (s.time < 0 || s.time >= length) fail(Errc::ConfigError, "shock time outside the stream");
        if (s.duration < 0) fail(Errc::ConfigError, "shock duration must be non-negative");
        if (!std::isfinite(s.magnitude)) fail(Errc::ConfigError, "shock magnitude must be finite");
        if (s.shape == ShockShape::pattern && s.period < 2) fail(Errc::ConfigError, "pattern shock needs a period >= 2");
    }
}

SynthStream synth_stream(const SynthSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<Wave> base;
    for (const auto& c : spec.components) base.emplace_back(c);
    std::vector<std::vector<Wave>> regime_waves;
    for (const auto& r : spec.regimes) {
        regime_waves.emplace_back();
        for (const auto& c : r.components) regime_waves.back().emplace_back(c);
    }
    std::vector<double> shift(static_cast<std::size_t>(spec.channels), 0.0);
    for (Index c = 1; c < spec.channels; ++c) shift[static_cast<std::size_t>(c)] = spec.channel_jitter * unit(rng);

    SynthStream out;
    Index cycle = 0;
    for (const auto& r : spec.regimes) cycle += r.duration;
    std::vector<Index> regime_at(static_cast<std::size_t>(spec.length), -1);
    if (cycle > 0) {
        for (Index t = 0; t < spec.length; ++t) {
            Index pos = t % cycle;
            Index r = 0;
            while (pos >= spec.regimes[static_cast<std::size_t>(r)].duration) {
                pos -= spec.regimes[static_cast<std::size_t>(r)].duration;
                ++r;
            }
            regime_at[static_cast<std::size_t>(t)] = r;
            if (pos == 0 && t > 0) {
                out.events.push_back({t, "recurring", spec.regimes[static_cast<std::size_t>(r)].name});
            }
        }
    }
    for (const auto& s : spec.shocks) {
        out.events.push_back({s.time, "emergent", std::string(to_string(s.shape))});
    }
    std::stable_sort(out.events.begin(), out.events.end(),
                     [](const SynthEvent& a, const SynthEvent& b) { return a.time < b.time; });

    Matrix values(spec.length, spec.channels);
    for (Index t = 0; t < spec.length; ++t) {
        for (Index c = 0; c < spec.channels; ++c) {
            const double sh = shift[static_cast<std::size_t>(c)];
            double v = spec.base + spec.trend * static_cast<double>(t);
            for (const auto& w : base) v += w.at(t, sh);
            const Index r = regime_at[static_cast<std::size_t>(t)];
            if (r >= 0) {
                v += spec.regimes[static_cast<std::size_t>(r)].offset;
                for (const auto& w : regime_waves[static_cast<std::size_t>(r)]) v += w.at(t, sh);
            }
            for (const auto& s : spec.shocks) v += shock_value(s, t);
            if (spec.noise > 0.0) v += spec.noise * normal(rng);
            values(t, c) = v;
        }
    }
    out.store = SeriesStore(std::move(values), {});
    return out;
}

std::vector<std::string> synth_preset_names() {
    return {"two-period", "two-profile", "shock", "weekly-regime", "alternating-periods", "etth2-like"};
}

SynthSpec synth_preset(std::string_view name, std::uint64_t seed) {
    SynthSpec s;
    s.seed = seed;
    if (name == "two-period") {
        s.length = 4000;
        s.channels = 3;
        s.noise = 0.1;
        s.channel_jitter = 0.3;
        s.components = {{24, 1.0, 0.0, WaveShape::sine, 0}, {168, 0.7, 0.0, WaveShape::sine, 0}};
    } else if (name == "two-profile") {
        // Same periods with non-sinusoidal shapes: windows at different lags are
        // no longer linear images of each other, so the choice of expert matters.
        s = synth_preset("two-period", seed);
        s.components = {{24, 1.0, 0.0, WaveShape::profile, seed + 41}, {168, 0.7, 0.0, WaveShape::profile, seed + 42}};
    } else if (name == "shock") {
        s = synth_preset("two-period", seed);
        s.shocks = {{3200, ShockShape::level, 5.0, 0, 0}};
    } else if (name == "weekly-regime") {
        s.length = 24 * 7 * 24;
        s.channels = 2;
        s.noise = 0.05;
        s.channel_jitter = 0.1;
        s.components = {{24, 0.5, 0.0, WaveShape::profile, seed + 11}};
        s.regimes = {{"weekday", 120, 0.0, {{24, 1.0, 0.0, WaveShape::profile, seed + 12}}},
                     {"weekend", 48, -1.5, {{24, 1.0, 0.0, WaveShape::profile, seed + 13}}}};
    } else if (name == "alternating-periods") {
        s.length = 6000;
        s.channels = 2;
        s.noise = 0.1;
        s.channel_jitter = 0.2;
        // 40 shares no multiple with 24 or 168 inside the buffer
        s.regimes = {{"p40", 720, 0.0, {{40, 1.5, 0.0, WaveShape::profile, seed + 31}}},
                     {"p24-168", 720, 0.0,
                      {{24, 1.0, 0.0, WaveShape::profile, seed + 32}, {168, 1.0, 0.0, WaveShape::profile, seed + 33}}}};
    } else if (name == "etth2-like") {
        s.length = 17420;
        s.channels = 7;
        s.noise = 0.3;
        s.channel_jitter = 0.2;
        s.trend = 2e-5;
        s.components = {{24, 1.0, 0.0, WaveShape::profile, seed + 21}, {168, 0.6, 0.0, WaveShape::profile, seed + 22}};
        s.shocks = {{9000, ShockShape::level, 1.5, 0, 0},
                    {13000, ShockShape::ramp, -1.0, 500, 0},
                    {15500, ShockShape::pattern, 0.8, 0, 72}};
    } else {
        fail(Errc::ConfigError, "unknown synthetic preset '" + std::string(name) + "'");
    }
    return s;
}

namespace {

WaveShape parse_wave(std::string_view s) {
    if (s == "sine") return WaveShape::sine;
    if (s == "profile") return WaveShape::profile;
    fail(Errc::ConfigError, "unknown component shape '" + std::string(s) + "'");
}

ShockShape parse_shock(std::string_view s) {
    if (s == "level") return ShockShape::level;
    if (s == "spike") return ShockShape::spike;
    if (s == "ramp") return ShockShape::ramp;
    if (s == "pattern") return ShockShape::pattern;
    fail(Errc::ConfigError, "unknown shock shape '" + std::string(s) + "'");
}

template <typename T>
T get_or(const toml::table& t, std::string_view key, T fallback) {
    const toml::node* n = t.get(key);
    if (n == nullptr) return fallback;
    if constexpr (std::is_same_v<T, std::string>) {
        if (auto v = n->value<std::string>()) return *v;
    } else if constexpr (std::is_floating_point_v<T>) {
        if (auto v = n->value<double>()) return *v;
    } else {
        if (auto v = n->value<std::int64_t>()) return static_cast<T>(*v);
    }
    fail(Errc::ConfigError, "synthetic spec key '" + std::string(key) + "' has the wrong type");
}

const toml::array* table_array(const toml::table& t, std::string_view key) {
    const toml::node* n = t.get(key);
    if (n == nullptr) return nullptr;
    const toml::array* arr = n->as_array();
    if (arr == nullptr || !arr->is_array_of_tables()) fail(Errc::ConfigError, "'" + std::string(key) + "' must be [[" + std::string(key) + "]] tables");
    return arr;
}

std::vector<PeriodicComponent> parse_components(const toml::table& t) {
    std::vector<PeriodicComponent> out;
    if (const auto* arr = table_array(t, "component")) {
        for (const auto& node : *arr) {
            const auto& c = *node.as_table();
            out.push_back({get_or<Index>(c, "period", 24), get_or<double>(c, "amplitude", 1.0),
                           get_or<double>(c, "phase", 0.0), parse_wave(get_or<std::string>(c, "shape", "sine")),
                           get_or<std::uint64_t>(c, "profile_seed", 0)});
        }
    }
    return out;
}

} // namespace

SynthSpec parse_synth_spec(std::string_view toml_text) {
    toml::table root;
    try {
        root = toml::parse(toml_text);
    } catch (const toml::parse_error& e) {
        fail(Errc::ConfigError, "TOML parse error: " + std::string(e.description()));
    }
    SynthSpec s;
    if (auto preset = root.get("preset")) {
        auto name = preset->value<std::string>();
        if (!name) fail(Errc::ConfigError, "preset must be a string");
        s = synth_preset(*name, get_or<std::uint64_t>(root, "seed", 0));
    }
    s.length = get_or<Index>(root, "length", s.length);
    s.channels = get_or<Index>(root, "channels", s.channels);
    s.base = get_or<double>(root, "base", s.base);
    s.trend = get_or<double>(root, "trend", s.trend);
    s.noise = get_or<double>(root, "noise", s.noise);
    s.channel_jitter = get_or<double>(root, "channel_jitter", s.channel_jitter);
    s.seed = get_or<std::uint64_t>(root, "seed", s.seed);
    if (root.contains("component")) s.components = parse_components(root);
    if (const auto* arr = table_array(root, "regime")) {
        s.regimes.clear();
        for (const auto& node : *arr) {
            const auto& r = *node.as_table();
            s.regimes.push_back({get_or<std::string>(r, "name", "regime" + std::to_string(s.regimes.size())),
                                 get_or<Index>(r, "duration", 1), get_or<double>(r, "offset", 0.0),
                                 parse_components(r)});
        }
    }
    if (const auto* arr = table_array(root, "shock")) {
        s.shocks.clear();
        for (const auto& node : *arr) {
            const auto& k = *node.as_table();
            s.shocks.push_back({get_or<Index>(k, "time", 0), parse_shock(get_or<std::string>(k, "shape", "level")),
                                get_or<double>(k, "magnitude", 1.0), get_or<Index>(k, "duration", 0),
                                get_or<Index>(k, "period", 0)});
        }
    }
    s.validate();
    return s;
}

std::string_view to_string(ShockShape s) noexcept {
    switch (s) {
    case ShockShape::level: return "level";
    case ShockShape::spike: return "spike";
    case ShockShape::ramp: return "ramp";
    case ShockShape::pattern: return "pattern";
    }
    return "?";
}

namespace {

nlohmann::json component_json(const PeriodicComponent& c) {
    return {{"period", c.period}, {"amplitude", c.amplitude}, {"phase", c.phase},
            {"shape", c.shape == WaveShape::sine ? "sine" : "profile"}, {"profile_seed", c.profile_seed}};
}

} // namespace

nlohmann::json to_json(const SynthSpec& spec) {
    nlohmann::json j{{"length", spec.length}, {"channels", spec.channels}, {"base", spec.base},
                     {"trend", spec.trend}, {"noise", spec.noise}, {"channel_jitter", spec.channel_jitter},
                     {"seed", spec.seed}};
    j["components"] = nlohmann::json::array();
    for (const auto& c : spec.components) j["components"].push_back(component_json(c));
    j["regimes"] = nlohmann::json::array();
    for (const auto& r : spec.regimes) {
        nlohmann::json rj{{"name", r.name}, {"duration", r.duration}, {"offset", r.offset}};
        rj["components"] = nlohmann::json::array();
        for (const auto& c : r.components) rj["components"].push_back(component_json(c));
        j["regimes"].push_back(rj);
    }
    j["shocks"] = nlohmann::json::array();
    for (const auto& s : spec.shocks) {
        j["shocks"].push_back({{"time", s.time}, {"shape", std::string(to_string(s.shape))},
                               {"magnitude", s.magnitude}, {"duration", s.duration}, {"period", s.period}});
    }
    return j;
}

nlohmann::json events_json(const SynthStream& stream) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : stream.events) arr.push_back({{"time", e.time}, {"kind", e.kind}, {"label", e.label}});
    return arr;
}

std::filesystem::path write_synth(const std::filesystem::path& csv_path, const SynthStream& stream,
                                  const SynthSpec& spec) {
    write_csv(csv_path, stream.store);
    auto sidecar = csv_path;
    sidecar.replace_extension(".events.json");
    std::ofstream out(sidecar);
    if (!out) fail(Errc::IoError, "cannot write " + sidecar.string());
    out << nlohmann::json{{"spec", to_json(spec)}, {"events", events_json(stream)}}.dump(2) << '\n';
    return sidecar;
}

} // namespace dyname
