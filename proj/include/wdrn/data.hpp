#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <ostream>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "wdrn/error.hpp"
#include "wdrn/png_io.hpp"
#include "wdrn/tensor.hpp"

namespace wdrn {

enum class Azimuth : std::uint8_t { N, NE, E, SE, S, SW, W, NW };

inline constexpr std::array<std::string_view, 8> kAzimuthNames{"N", "NE", "E", "SE", "S", "SW", "W", "NW"};

inline std::string_view to_string(Azimuth a) { return kAzimuthNames[static_cast<std::size_t>(a)]; }

inline Azimuth parse_azimuth(std::string_view s) {
    for (std::size_t i = 0; i < kAzimuthNames.size(); ++i) {
        if (kAzimuthNames[i] == s) return static_cast<Azimuth>(i);
    }
    throw ConfigError("azimuth", "unknown azimuth '" + std::string(s) + "'");
}

struct IlluminationSetting {
    Azimuth azimuth = Azimuth::N;
    unsigned color_temp_kelvin = 6500;

    friend bool operator==(const IlluminationSetting&, const IlluminationSetting&) = default;

    void validate() const {
        if (color_temp_kelvin < 2500 || color_temp_kelvin > 6500) {
            throw ConfigError("color_temp", "color temperature " + std::to_string(color_temp_kelvin) +
                                                "K outside [2500, 6500]");
        }
    }

    std::string str() const { return std::string(to_string(azimuth)) + "/" + std::to_string(color_temp_kelvin) + "K"; }
};

/// The one-to-one track: north light at 6500K relit to east light at 4500K.
inline constexpr IlluminationSetting kTrackSource{Azimuth::N, 6500};
inline constexpr IlluminationSetting kTrackTarget{Azimuth::E, 4500};

struct ImagePair {
    Tensor<float> input_image;   ///< [1,H,W,3] in [0,1]
    Tensor<float> target_image;  ///< [1,H,W,3] in [0,1]
    IlluminationSetting from;
    IlluminationSetting to;
    std::string name;
};

struct DatasetSplit {
    std::vector<ImagePair> train;
    std::vector<ImagePair> val;
    std::vector<ImagePair> test;
    std::uint64_t seed = 0;
};

/// Channel multipliers: linear blend from warm (1.0, 0.6, 0.3) at 2500K to
/// neutral at 6500K.
inline std::array<double, 3> color_temperature_tint(unsigned kelvin) {
    const double t = std::clamp((static_cast<double>(kelvin) - 2500.0) / 4000.0, 0.0, 1.0);
    constexpr std::array<double, 3> warm{1.0, 0.6, 0.3};
    return {warm[0] + t * (1.0 - warm[0]), warm[1] + t * (1.0 - warm[1]), warm[2] + t * (1.0 - warm[2])};
}

/// Unit vector toward the light in image coordinates (x right, y down, z
/// out of the image), at 45 degrees elevation.
inline std::array<double, 3> light_direction(Azimuth a) {
    const double angle = static_cast<double>(static_cast<int>(a)) * std::numbers::pi / 4.0;  // clockwise from north
    const double c = std::cos(std::numbers::pi / 4.0);
    return {c * std::sin(angle), -c * std::cos(angle), std::sin(std::numbers::pi / 4.0)};
}

namespace detail {

inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

struct Wave {
    double amp, fx, fy, phase;
};

inline Tensor<float> render(const std::vector<Wave>& waves, std::size_t size, const IlluminationSetting& light) {
    const auto l = light_direction(light.azimuth);
    const auto tint = color_temperature_tint(light.color_temp_kelvin);
    Tensor<float> img(Shape{1, size, size, 3});
    const double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(size);
            const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(size);
            double hu = 0, hv = 0;
            for (const Wave& w : waves) {
                const double d = w.amp * two_pi * std::cos(two_pi * (w.fx * u + w.fy * v) + w.phase);
                hu += d * w.fx;
                hv += d * w.fy;
            }
            const double norm = std::sqrt(hu * hu + hv * hv + 1.0);
            const double shade = std::max(0.0, (-hu * l[0] - hv * l[1] + l[2]) / norm);
            for (std::size_t c = 0; c < 3; ++c) {
                img(0, y, x, c) = static_cast<float>(std::clamp(shade * tint[c], 0.0, 1.0));
            }
        }
    }
    return img;
}

}  // namespace detail

inline constexpr std::size_t kSynthWaveCount = 8;

/// Deterministic desk-scale relighting pair: a heightfield built from eight
/// random-phase sinusoids, Lambertian-shaded under a directional light
/// (azimuth from the setting, 45 degrees elevation), tinted by color
/// temperature and clamped to [0,1]. Input and target share the heightfield.
inline ImagePair synth_relight_pair(std::uint64_t seed, std::size_t size, const IlluminationSetting& from,
                                    const IlluminationSetting& to) {
    if (size == 0 || size % 16 != 0) {
        throw ShapeError("synth_relight_pair: size " + std::to_string(size) + " is not a positive multiple of 16");
    }
    from.validate();
    to.validate();
    std::mt19937_64 rng(seed);
    std::vector<detail::Wave> waves;
    while (waves.size() < kSynthWaveCount) {
        const double fx = static_cast<double>(static_cast<int>(rng() % 7) - 3);
        const double fy = static_cast<double>(static_cast<int>(rng() % 7) - 3);
        const double amp = 0.005 + 0.01 * detail::uniform01(rng);
        const double phase = 2.0 * std::numbers::pi * detail::uniform01(rng);
        if (fx == 0 && fy == 0) continue;
        waves.push_back({amp, fx, fy, phase});
    }
    return {detail::render(waves, size, from), detail::render(waves, size, to), from, to,
            "synth_" + std::to_string(seed)};
}

/// `n` one-to-one track pairs whose generator seeds are drawn from `seed`.
inline std::vector<ImagePair> synthetic_dataset(std::size_t n, std::size_t size, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<ImagePair> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(synth_relight_pair(rng(), size, kTrackSource, kTrackTarget));
    return out;
}

/// Seeded Fisher-Yates shuffle followed by a contiguous train/val/test cut.
inline DatasetSplit split(const std::vector<ImagePair>& dataset, std::array<double, 3> fractions, std::uint64_t seed) {
    for (double f : fractions) {
        if (f < 0) throw std::invalid_argument("split: fractions must be non-negative");
    }
    if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
        throw std::invalid_argument("split: fractions must sum to 1");
    }
    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    const auto n = static_cast<double>(dataset.size());
    const std::size_t n_train = std::min(dataset.size(), static_cast<std::size_t>(std::llround(fractions[0] * n)));
    const std::size_t n_val =
        std::min(dataset.size() - n_train, static_cast<std::size_t>(std::llround(fractions[1] * n)));
    DatasetSplit out;
    out.seed = seed;
    for (std::size_t i = 0; i < order.size(); ++i) {
        auto& bucket = i < n_train ? out.train : (i < n_train + n_val ? out.val : out.test);
        bucket.push_back(dataset[order[i]]);
    }
    return out;
}

/// `name<TAB>split` per line.
inline void write_split_manifest(std::ostream& os, const DatasetSplit& s) {
    for (const auto& p : s.train) os << p.name << "\ttrain\n";
    for (const auto& p : s.val) os << p.name << "\tval\n";
    for (const auto& p : s.test) os << p.name << "\ttest\n";
}

/// Sorted regular files of a directory, keyed by filename.
inline std::map<std::string, std::filesystem::path> list_files(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw DataError(dir.string() + ": not a directory");
    std::map<std::string, std::filesystem::path> out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file()) out.emplace(e.path().filename().string(), e.path());
    }
    return out;
}

/// Loads `root/input/*.png` paired by filename with `root/target/*.png`.
inline std::vector<ImagePair> load_paired_dataset(const std::filesystem::path& root) {
    const auto inputs = list_files(root / "input");
    const auto targets = list_files(root / "target");
    for (const auto& [name, _] : inputs) {
        if (!targets.contains(name)) throw DataError("input/" + name + " has no matching target/" + name);
    }
    for (const auto& [name, _] : targets) {
        if (!inputs.contains(name)) throw DataError("target/" + name + " has no matching input/" + name);
    }
    std::vector<ImagePair> out;
    for (const auto& [name, in_path] : inputs) {
        const RgbImage in = read_png_rgb8(in_path);
        const RgbImage tg = read_png_rgb8(targets.at(name));
        if (in.width != tg.width || in.height != tg.height) {
            throw DataError(name + ": input is " + std::to_string(in.width) + "x" + std::to_string(in.height) +
                            " but target is " + std::to_string(tg.width) + "x" + std::to_string(tg.height));
        }
        out.push_back({to_tensor(in), to_tensor(tg), kTrackSource, kTrackTarget, name});
    }
    return out;
}

/// Stacks equally sized [1,H,W,C] images into one [N,H,W,C] batch.
inline Tensor<float> stack(const std::vector<const Tensor<float>*>& items) {
    if (items.empty()) throw ShapeError("stack: empty batch");
    Shape s = items.front()->shape();
    std::vector<float> v;
    v.reserve(s.size() * items.size());
    for (const auto* t : items) {
        if (t->shape() != s) throw ShapeError("stack: mixed shapes " + s.str() + " and " + t->shape().str());
        v.insert(v.end(), t->data().begin(), t->data().end());
    }
    s.batch = items.size();
    return Tensor<float>(s, std::move(v));
}

}  // namespace wdrn
