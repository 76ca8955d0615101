#include "dyname/config.hpp"

#include "dyname/error.hpp"

#include "toml.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace dyname {

namespace {

template <typename T>
void read_number(const toml::table& table, std::string_view key, T& target) {
    const toml::node* node = table.get(key);
    if (node == nullptr) return;
    if constexpr (std::is_floating_point_v<T>) {
        if (auto v = node->value<double>()) {
            target = static_cast<T>(*v);
            return;
        }
    } else {
        if (auto v = node->value<std::int64_t>()) {
            if (*v < 0) fail(Errc::ConfigError, "config key '" + std::string(key) + "' must be non-negative");
            target = static_cast<T>(*v);
            return;
        }
    }
    fail(Errc::ConfigError, "config key '" + std::string(key) + "' has the wrong type");
}

void read_bool(const toml::table& table, std::string_view key, bool& target) {
    const toml::node* node = table.get(key);
    if (node == nullptr) return;
    auto v = node->value<bool>();
    if (!v) fail(Errc::ConfigError, "config key '" + std::string(key) + "' must be a boolean");
    target = *v;
}

std::optional<std::string> read_string(const toml::table& table, std::string_view key) {
    const toml::node* node = table.get(key);
    if (node == nullptr) return std::nullopt;
    auto v = node->value<std::string>();
    if (!v) fail(Errc::ConfigError, "config key '" + std::string(key) + "' must be a string");
    return *v;
}

std::vector<Index> read_index_array(const toml::node& node, std::string_view key) {
    const toml::array* arr = node.as_array();
    if (arr == nullptr) fail(Errc::ConfigError, "config key '" + std::string(key) + "' must be an array");
    std::vector<Index> out;
    for (const auto& item : *arr) {
        auto v = item.value<std::int64_t>();
        if (!v || *v <= 0) fail(Errc::ConfigError, "config key '" + std::string(key) + "' needs positive integers");
        out.push_back(static_cast<Index>(*v));
    }
    return out;
}

const toml::table* subtable(const toml::table& root, std::string_view name) {
    const toml::node* node = root.get(name);
    if (node == nullptr) return nullptr;
    const toml::table* table = node->as_table();
    if (table == nullptr) fail(Errc::ConfigError, "[" + std::string(name) + "] must be a table");
    return table;
}

} // namespace

FileConfig parse_config(std::string_view toml_text) {
    toml::table root;
    try {
        root = toml::parse(toml_text);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << "TOML parse error: " << e.description() << " at line " << e.source().begin.line;
        fail(Errc::ConfigError, msg.str());
    }

    FileConfig out;
    if (const auto* e = subtable(root, "engine")) {
        EngineConfig& c = out.engine;
        read_number(*e, "lookback", c.lookback);
        read_number(*e, "horizon", c.horizon);
        read_number(*e, "buffer", c.buffer);
        read_number(*e, "experts", c.experts);
        read_number(*e, "samples", c.samples);
        read_number(*e, "features", c.features);
        read_number(*e, "lambda", c.lambda);
        read_number(*e, "alpha", c.safety.alpha);
        read_number(*e, "delta", c.safety.delta);
        read_number(*e, "beta", c.safety.beta);
        read_bool(*e, "asymmetric", c.safety.asymmetric);
        read_number(*e, "learning_rate", c.learning_rate);
        read_number(*e, "seed", c.seed);
        read_number(*e, "pretrain_epochs", c.pretrain_epochs);
        read_number(*e, "patience", c.patience);
        if (auto form = read_string(*e, "ridge_form")) {
            if (*form == "dual") {
                c.ridge_form = RidgeForm::dual;
            } else if (*form == "primal") {
                c.ridge_form = RidgeForm::primal;
            } else {
                fail(Errc::ConfigError, "ridge_form must be 'dual' or 'primal'");
            }
        }
    }
    if (const auto* a = subtable(root, "ablation")) {
        AblationSpec& s = out.ablation;
        if (auto gate = read_string(*a, "gate")) s.gate = parse_gate_variant(*gate);
        read_bool(*a, "use_danger", s.use_danger);
        read_bool(*a, "keep_beta", s.keep_beta_without_danger);
        if (const toml::node* p = a->get("periods")) {
            if (auto mode = p->value<std::string>()) {
                if (*mode != "dynamic") fail(Errc::ConfigError, "periods must be \"dynamic\" or an array");
                s.period_mode = PeriodMode::dynamic_fft;
            } else {
                s.period_mode = PeriodMode::fixed;
                s.fixed_periods = read_index_array(*p, "periods");
                if (s.fixed_periods.empty()) fail(Errc::ConfigError, "fixed periods must not be empty");
            }
        }
    }
    if (const auto* r = subtable(root, "run")) {
        out.data = read_string(*r, "data");
        out.method = read_string(*r, "method");
        out.out = read_string(*r, "out");
        if (const toml::node* m = r->get("methods")) {
            const toml::array* arr = m->as_array();
            if (arr == nullptr) fail(Errc::ConfigError, "methods must be an array of strings");
            for (const auto& item : *arr) {
                auto v = item.value<std::string>();
                if (!v) fail(Errc::ConfigError, "methods must be an array of strings");
                parse_method(*v);
                out.methods.push_back(*v);
            }
        }
        if (const toml::node* h = r->get("horizons")) out.horizons = read_index_array(*h, "horizons");
    }
    return out;
}

FileConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::ConfigError, "cannot open config file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

nlohmann::json to_json(const EngineConfig& cfg) {
    return nlohmann::json{
        {"lookback", cfg.lookback},
        {"horizon", cfg.horizon},
        {"buffer", cfg.buffer},
        {"experts", cfg.experts},
        {"samples", cfg.samples},
        {"features", cfg.features},
        {"lambda", cfg.lambda},
        {"alpha", cfg.safety.alpha},
        {"delta", cfg.safety.delta},
        {"beta", cfg.safety.beta},
        {"asymmetric", cfg.safety.asymmetric},
        {"learning_rate", cfg.learning_rate},
        {"seed", cfg.seed},
        {"pretrain_epochs", cfg.pretrain_epochs},
        {"patience", cfg.patience},
        {"force_gamma_one", cfg.force_gamma_one},
        {"stop_specialized", cfg.stop_specialized},
        {"ridge_form", cfg.ridge_form == RidgeForm::dual ? "dual" : "primal"},
        {"allow_fallback", cfg.allow_fallback},
    };
}

nlohmann::json to_json(const AblationSpec& spec) {
    nlohmann::json j{
        {"gate", std::string(to_string(spec.gate))},
        {"use_danger", spec.use_danger},
        {"keep_beta", spec.keep_beta_without_danger},
    };
    if (spec.period_mode == PeriodMode::dynamic_fft) {
        j["periods"] = "dynamic";
    } else {
        j["periods"] = spec.fixed_periods;
    }
    return j;
}

nlohmann::json RunManifest::identity() const {
    return nlohmann::json{
        {"dataset", dataset},
        {"method", std::string(to_string(method))},
        {"ablation", to_json(ablation)},
        {"engine", to_json(engine)},
    };
}

std::string RunManifest::config_hash() const {
    // nlohmann::json keeps object keys sorted, so dump() is canonical.
    return fnv1a_hex(identity().dump());
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace dyname
