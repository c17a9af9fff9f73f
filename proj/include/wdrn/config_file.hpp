#pragma once

// Flat `key = value` configuration shared by the trainer and the CLI.
// Blank lines and `#` comments (whole-line or trailing) are ignored.

#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "wdrn/error.hpp"
#include "wdrn/model.hpp"
#include "wdrn/trainer.hpp"

namespace wdrn {

struct RunConfig {
    std::size_t levels = 3;
    DomainVariant variant = DomainVariant::wavelet;
    Ratio width_scale{1, 1};
    TrainConfig train;
    std::size_t image_size = 64;                                       ///< synthetic pair size
    std::array<double, 3> split_fractions{300.0 / 390, 45.0 / 390, 45.0 / 390};

    WdrnConfig model() const { return WdrnConfig::standard(levels, variant, width_scale); }
};

/// Keys that must appear in any config file handed to the CLI.
inline const std::set<std::string>& required_config_keys() {
    static const std::set<std::string> keys{"epochs", "batch_size", "lr"};
    return keys;
}

using KeyValues = std::vector<std::pair<std::string, std::string>>;

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline KeyValues parse_key_values(std::istream& in) {
    KeyValues out;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno), "config line " + std::to_string(lineno) +
                                                                    ": expected `key = value`, got '" + body + "'");
        }
        std::string key = trim(std::string_view(body).substr(0, eq));
        std::string value = trim(std::string_view(body).substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("line " + std::to_string(lineno), "config line " + std::to_string(lineno) + ": empty key");
        }
        out.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

inline KeyValues read_config_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config", "cannot open config file " + path.string());
    return parse_key_values(f);
}

namespace detail {

inline double parse_real(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw ConfigError(key, key + ": expected a number, got '" + v + "'");
}

inline std::uint64_t parse_count(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) {
        throw ConfigError(key, key + ": expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

inline std::array<double, 3> parse_triple(const std::string& key, const std::string& v) {
    std::array<double, 3> out{};
    std::stringstream ss(v);
    std::string part;
    std::size_t i = 0;
    while (std::getline(ss, part, ',')) {
        if (i == 3) break;
        out[i++] = parse_real(key, trim(part));
    }
    if (i != 3 || std::getline(ss, part, ',')) throw ConfigError(key, key + ": expected three comma-separated numbers");
    return out;
}

}  // namespace detail

/// Applies one setting; unknown keys are rejected.
inline void apply_setting(RunConfig& rc, const std::string& key, const std::string& value) {
    using detail::parse_count;
    using detail::parse_real;
    TrainConfig& t = rc.train;
    LossConfig& l = t.loss;
    if (key == "levels") rc.levels = parse_count(key, value);
    else if (key == "variant") rc.variant = parse_domain_variant(value);
    else if (key == "width_scale") rc.width_scale = Ratio::parse(value);
    else if (key == "image_size") rc.image_size = parse_count(key, value);
    else if (key == "split") rc.split_fractions = detail::parse_triple(key, value);
    else if (key == "epochs") t.epochs = parse_count(key, value);
    else if (key == "batch_size") t.batch_size = parse_count(key, value);
    else if (key == "lr") t.lr = parse_real(key, value);
    else if (key == "lr_decay") t.lr_decay = parse_real(key, value);
    else if (key == "lr_decay_every") t.lr_decay_every = parse_count(key, value);
    else if (key == "beta1") t.beta1 = parse_real(key, value);
    else if (key == "beta2") t.beta2 = parse_real(key, value);
    else if (key == "adam_eps") t.adam_eps = parse_real(key, value);
    else if (key == "seed") t.seed = parse_count(key, value);
    else if (key == "early_stop_epoch") {
        if (value.empty() || value == "none") t.early_stop_epoch.reset();
        else t.early_stop_epoch = parse_count(key, value);
    }
    else if (key == "alpha") l.alpha = parse_real(key, value);
    else if (key == "beta") l.beta = parse_real(key, value);
    else if (key == "gamma") l.gamma = parse_real(key, value);
    else if (key == "blur_sigma") l.blur_sigma = parse_real(key, value);
    else if (key == "blur_kernel") l.blur_kernel = parse_count(key, value);
    else if (key == "gray_weights") l.gray_weights = detail::parse_triple(key, value);
    else if (key == "ssim_window") l.ssim_window = parse_count(key, value);
    else if (key == "ssim_sigma") l.ssim_sigma = parse_real(key, value);
    else if (key == "ssim_k1") l.ssim_k1 = parse_real(key, value);
    else if (key == "ssim_k2") l.ssim_k2 = parse_real(key, value);
    else if (key == "data_range") l.data_range = parse_real(key, value);
    else throw ConfigError(key, "unknown config key '" + key + "'");
}

/// Applies every pair in order (later pairs win).
inline void apply_settings(RunConfig& rc, const KeyValues& kv) {
    for (const auto& [k, v] : kv) apply_setting(rc, k, v);
}

/// Throws ConfigError naming the first required key missing from `kv`.
inline void require_keys(const KeyValues& kv, const std::set<std::string>& keys) {
    std::set<std::string> present;
    for (const auto& [k, _] : kv) present.insert(k);
    for (const auto& k : keys) {
        if (!present.contains(k)) throw ConfigError(k, "missing required config key '" + k + "'");
    }
}

}  // namespace wdrn
