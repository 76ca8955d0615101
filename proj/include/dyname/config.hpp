#pragma once

#include "dyname/engine.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dyname {

/// Contents of a TOML run file. Every table is optional:
///
///   [engine]    lookback, horizon, buffer, experts, samples, features, lambda,
///               alpha, delta, beta, learning_rate, seed, pretrain_epochs, patience
///   [ablation]  gate, use_danger, keep_beta, periods = "dynamic" | [168, 24]
///   [run]       data, method, out, methods = [...], horizons = [...]
struct FileConfig {
    EngineConfig engine;
    AblationSpec ablation;
    std::optional<std::string> data;
    std::optional<std::string> method;
    std::optional<std::string> out;
    std::vector<std::string> methods;
    std::vector<Index> horizons;
};

FileConfig parse_config(std::string_view toml_text);
FileConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const EngineConfig& cfg);
nlohmann::json to_json(const AblationSpec& spec);

/// Identity of one run. The hash covers exactly the run-affecting fields
/// (the output directory is not one of them).
struct RunManifest {
    std::string dataset;
    Method method = Method::dyname;
    AblationSpec ablation;
    EngineConfig engine;
    std::filesystem::path output_dir;

    [[nodiscard]] nlohmann::json identity() const;
    [[nodiscard]] std::string config_hash() const;
};

/// 64-bit FNV-1a of the bytes, as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

} // namespace dyname
