#pragma once

// Wavelet Decomposed RelightNet: a multi-level encoder/decoder whose
// down/upsampling steps are single-level Haar DWT/IDWT (or, for the
// pixel-domain variant, stride-2 convolutions and transposed convolutions).
//
// Dataflow, L levels:
//   x -> DWT -> space_to_depth(2) -> enc.L1 -> e1
//   e(i-1) -> DWT -> enc.Li -> ei                          (i = 2..L)
//   d = eL;  d -> IDWT -> + ek -> dec.Lk -> d              (k = L-1..1)
//   d -> depth_to_space(2) -> out.conv (12 filters) -> IDWT -> + x
// Every conv-block layer is a 3x3 `same` convolution followed by ReLU.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "wdrn/conv.hpp"
#include "wdrn/error.hpp"
#include "wdrn/shuffle.hpp"
#include "wdrn/tensor.hpp"
#include "wdrn/wavelet.hpp"

namespace wdrn {

enum class DomainVariant : std::uint8_t { wavelet = 0, strided = 1 };

inline std::string to_string(DomainVariant v) { return v == DomainVariant::wavelet ? "wavelet" : "strided"; }

inline DomainVariant parse_domain_variant(std::string_view s) {
    if (s == "wavelet") return DomainVariant::wavelet;
    if (s == "strided") return DomainVariant::strided;
    throw ConfigError("variant", "unknown model variant '" + std::string(s) + "' (expected wavelet or strided)");
}

/// Positive rational multiplier for filter counts.
struct Ratio {
    std::uint32_t num = 1;
    std::uint32_t den = 1;

    friend bool operator==(const Ratio&, const Ratio&) = default;

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }

    /// round(f * num / den), at least 1.
    std::size_t scale(std::size_t f) const {
        const std::uint64_t n = 2ull * f * num + den;
        return std::max<std::size_t>(1, static_cast<std::size_t>(n / (2ull * den)));
    }

    std::string str() const { return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den); }

    static Ratio parse(std::string_view s) {
        auto to_u32 = [&](std::string_view part) {
            if (part.empty() || part.find_first_not_of("0123456789") != std::string_view::npos) {
                throw ConfigError("width_scale", "width_scale must look like 'n' or 'n/d', got '" + std::string(s) + "'");
            }
            return static_cast<std::uint32_t>(std::stoul(std::string(part)));
        };
        Ratio r;
        if (auto slash = s.find('/'); slash != std::string_view::npos) {
            r = {to_u32(s.substr(0, slash)), to_u32(s.substr(slash + 1))};
        } else {
            r = {to_u32(s), 1};
        }
        if (r.num == 0 || r.den == 0) throw ConfigError("width_scale", "width_scale must be positive");
        return r;
    }
};

struct ConvBlockSpec {
    std::size_t layer_count = 1;
    std::size_t filters = 16;
    std::size_t final_filters = 0;  ///< width of the last layer; 0 means `filters`
    std::size_t kernel = 3;

    friend bool operator==(const ConvBlockSpec&, const ConvBlockSpec&) = default;

    std::size_t last_width() const { return final_filters ? final_filters : filters; }
};

struct WdrnConfig {
    std::size_t levels = 3;
    std::vector<ConvBlockSpec> encoder_blocks;  ///< [i] is encoder level i + 1
    std::vector<ConvBlockSpec> decoder_blocks;  ///< [i] is decoder level i + 1 (levels - 1 entries)
    DomainVariant domain_variant = DomainVariant::wavelet;
    Ratio width_scale{1, 1};
    std::size_t input_channels = 3;

    friend bool operator==(const WdrnConfig&, const WdrnConfig&) = default;

    /// Spatial extents must be multiples of this.
    std::size_t divisor() const { return std::size_t{1} << (levels + 1); }

    /// The standard 3-level layout (levels 2 and 4 derived from it).
    ///
    /// Encoder: L1 4x16, L2 4x64, L3 7x256, L4 7x512 widened to 1024.
    /// Decoder: L3 4x256, L2 4x64, L1 4x16 widened to 64 ahead of the
    /// output shuffler. The bottom encoder level always ends at four times
    /// the width of the level above so that its IDWT matches the skip.
    static WdrnConfig standard(std::size_t levels = 3, DomainVariant variant = DomainVariant::wavelet,
                               Ratio width_scale = {1, 1}) {
        if (levels < 2 || levels > 4) {
            throw ConfigError("levels", "levels must be 2, 3 or 4, got " + std::to_string(levels));
        }
        const std::vector<ConvBlockSpec> enc_all{{4, 16, 0, 3}, {4, 64, 0, 3}, {7, 256, 0, 3}, {7, 512, 0, 3}};
        const std::vector<ConvBlockSpec> dec_all{{4, 16, 64, 3}, {4, 64, 0, 3}, {4, 256, 0, 3}};
        WdrnConfig c;
        c.levels = levels;
        c.domain_variant = variant;
        c.width_scale = width_scale;
        c.encoder_blocks.assign(enc_all.begin(), enc_all.begin() + static_cast<std::ptrdiff_t>(levels));
        c.encoder_blocks.back().final_filters = 4 * c.encoder_blocks[levels - 2].last_width();
        if (c.encoder_blocks.back().final_filters == c.encoder_blocks.back().filters) {
            c.encoder_blocks.back().final_filters = 0;
        }
        c.decoder_blocks.assign(dec_all.begin(), dec_all.begin() + static_cast<std::ptrdiff_t>(levels - 1));
        return c;
    }
};

/// One trainable convolution in the network, in parameter order.
struct LayerSpec {
    std::string name;  ///< e.g. "enc.L1.conv0"; tensors are name + ".weight" / ".bias"
    std::size_t kernel_h, kernel_w, in_channels, out_channels;
    bool transposed = false;
    bool zero_init = false;
};

/// Resolves `config` into the concrete layer list, checking channel
/// consistency at every skip connection.
inline std::vector<LayerSpec> layer_plan(const WdrnConfig& cfg) {
    if (cfg.levels < 2 || cfg.levels > 4) {
        throw ConfigError("levels", "levels must be 2, 3 or 4, got " + std::to_string(cfg.levels));
    }
    if (cfg.encoder_blocks.size() != cfg.levels || cfg.decoder_blocks.size() != cfg.levels - 1) {
        throw ConfigError("levels", "config with " + std::to_string(cfg.levels) + " levels needs " +
                                        std::to_string(cfg.levels) + " encoder and " + std::to_string(cfg.levels - 1) +
                                        " decoder blocks");
    }
    if (cfg.width_scale.num == 0 || cfg.width_scale.den == 0) {
        throw ConfigError("width_scale", "width_scale must be positive");
    }
    const bool strided = cfg.domain_variant == DomainVariant::strided;
    std::vector<LayerSpec> plan;

    auto add_block = [&](const std::string& prefix, const ConvBlockSpec& spec, std::size_t cin) {
        if (spec.layer_count == 0) throw ConfigError("levels", prefix + ": block needs at least one layer");
        if (spec.kernel % 2 == 0) throw ConfigError("levels", prefix + ": kernel size must be odd");
        for (std::size_t i = 0; i < spec.layer_count; ++i) {
            const bool last = i + 1 == spec.layer_count;
            const std::size_t cout = cfg.width_scale.scale(last ? spec.last_width() : spec.filters);
            plan.push_back({prefix + ".conv" + std::to_string(i), spec.kernel, spec.kernel, cin, cout});
            cin = cout;
        }
        return cin;
    };

    std::size_t c = cfg.input_channels;
    if (strided) plan.push_back({"enc.L1.down", 3, 3, c, 4 * c});
    c = 4 * c * 4;  // DWT then space_to_depth(2)
    std::vector<std::size_t> enc_width(cfg.levels + 1, 0);
    enc_width[1] = add_block("enc.L1", cfg.encoder_blocks[0], c);
    for (std::size_t i = 2; i <= cfg.levels; ++i) {
        const std::string prefix = "enc.L" + std::to_string(i);
        const std::size_t prev = enc_width[i - 1];
        if (strided) plan.push_back({prefix + ".down", 3, 3, prev, 4 * prev});
        enc_width[i] = add_block(prefix, cfg.encoder_blocks[i - 1], 4 * prev);
    }
    std::size_t d = enc_width[cfg.levels];
    for (std::size_t k = cfg.levels - 1; k >= 1; --k) {
        const std::string prefix = "dec.L" + std::to_string(k);
        if (d % 4 != 0 || d / 4 != enc_width[k]) {
            throw ConfigError("levels", "skip connection at level " + std::to_string(k) + ": decoder delivers " +
                                            std::to_string(d) + "/4 channels but encoder level has " +
                                            std::to_string(enc_width[k]));
        }
        if (strided) plan.push_back({prefix + ".up", 2, 2, d, d / 4, true});
        d = add_block(prefix, cfg.decoder_blocks[k - 1], d / 4);
    }
    if (d % 4 != 0) {
        throw ConfigError("levels", "decoder level 1 outputs " + std::to_string(d) +
                                        " channels, not divisible by 4 for depth_to_space");
    }
    const std::size_t final_channels = 4 * cfg.input_channels;
    plan.push_back({"out.conv", 3, 3, d / 4, final_channels, false, true});
    if (strided) plan.push_back({"out.up", 2, 2, final_channels, cfg.input_channels, true});
    return plan;
}

/// Named trainable tensors with deterministic (insertion) iteration order.
template <std::floating_point T>
class ParameterSet {
public:
    using Entry = std::pair<std::string, Tensor<T>>;

    void add(std::string name, Tensor<T> t) {
        if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name " + name);
        t.set_requires_grad(true);
        index_.emplace(name, entries_.size());
        entries_.emplace_back(std::move(name), std::move(t));
    }

    bool contains(std::string_view name) const { return index_.contains(std::string(name)); }

    const Tensor<T>& at(std::string_view name) const { return entries_[position(name)].second; }
    Tensor<T>& at(std::string_view name) { return entries_[position(name)].second; }

    /// Swaps in a different tensor under an existing name (same shape).
    void replace(std::string_view name, Tensor<T> t) {
        auto& slot = entries_[position(name)].second;
        require_same_shape(slot.shape(), t.shape(), "ParameterSet::replace");
        slot = std::move(t);
    }

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }
    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }

    void zero_grad() {
        for (auto& [_, t] : entries_) t.zero_grad();
    }

    /// Deep copy; the result shares no storage with this set.
    ParameterSet clone() const { return cast<T>(); }

    template <std::floating_point U>
    ParameterSet<U> cast() const {
        ParameterSet<U> out;
        for (const auto& [name, t] : entries_) out.add(name, t.template cast<U>());
        return out;
    }

private:
    std::size_t position(std::string_view name) const {
        auto it = index_.find(std::string(name));
        if (it == index_.end()) throw std::out_of_range("no parameter named " + std::string(name));
        return it->second;
    }

    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

template <std::floating_point T>
std::size_t parameter_count(const ParameterSet<T>& params) {
    std::size_t n = 0;
    for (const auto& [_, t] : params) n += t.size();
    return n;
}

template <std::floating_point T>
struct Model {
    WdrnConfig config;
    ParameterSet<T> params;

    template <std::floating_point U>
    Model<U> cast() const {
        return {config, params.template cast<U>()};
    }
};

namespace detail {

/// Uniform double in [0, 1) from the top 53 bits of one generator draw.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

/// Creates parameters for `config`: He-style fan-in uniform weights from
/// `seed`, zero biases, zero weights for the 12-filter output convolution
/// (so the untrained network is the identity map).
template <std::floating_point T>
Model<T> build(const WdrnConfig& config, std::uint64_t seed) {
    Model<T> model{config, {}};
    std::mt19937_64 rng(seed);
    for (const LayerSpec& layer : layer_plan(config)) {
        const Shape ws{layer.kernel_h, layer.kernel_w, layer.in_channels, layer.out_channels};
        std::vector<T> w(ws.size(), T{0});
        if (!layer.zero_init) {
            const double bound = std::sqrt(6.0 / static_cast<double>(layer.kernel_h * layer.kernel_w * layer.in_channels));
            for (auto& v : w) v = static_cast<T>((2.0 * detail::unit_uniform(rng) - 1.0) * bound);
        }
        model.params.add(layer.name + ".weight", Tensor<T>(ws, std::move(w)));
        model.params.add(layer.name + ".bias", Tensor<T>(Shape{1, 1, 1, layer.out_channels}));
    }
    return model;
}

struct LayerTrace {
    std::string stage;
    Shape output;
};

namespace detail {

template <std::floating_point T>
class ForwardPass {
public:
    ForwardPass(const Model<T>& model, std::vector<LayerTrace>* trace) : m_(model), trace_(trace) {}

    Tensor<T> run(const Tensor<T>& x) {
        const WdrnConfig& cfg = m_.config;
        const Shape& s = x.shape();
        if (s.channels != cfg.input_channels) {
            throw ShapeError("forward: input " + s.str() + " must have " + std::to_string(cfg.input_channels) +
                             " channels");
        }
        if (s.height % cfg.divisor() != 0 || s.width % cfg.divisor() != 0) {
            throw ShapeError("forward: spatial extents of " + s.str() + " must be divisible by " +
                             std::to_string(cfg.divisor()) + " for a " + std::to_string(cfg.levels) + "-level model");
        }
        std::vector<Tensor<T>> enc(cfg.levels + 1);
        Tensor<T> h = record("enc.L1.down", down(x, "enc.L1"));
        h = record("enc.L1.space_to_depth", space_to_depth(h, 2));
        enc[1] = block("enc.L1", cfg.encoder_blocks[0], h);
        for (std::size_t i = 2; i <= cfg.levels; ++i) {
            const std::string prefix = "enc.L" + std::to_string(i);
            h = record(prefix + ".down", down(enc[i - 1], prefix));
            enc[i] = block(prefix, cfg.encoder_blocks[i - 1], h);
        }
        Tensor<T> d = enc[cfg.levels];
        for (std::size_t k = cfg.levels - 1; k >= 1; --k) {
            const std::string prefix = "dec.L" + std::to_string(k);
            d = record(prefix + ".up", up(d, prefix));
            if (d.shape() != enc[k].shape()) {
                throw ShapeError("forward: skip at level " + std::to_string(k) + " joins " + d.shape().str() +
                                 " with " + enc[k].shape().str());
            }
            d = record(prefix + ".skip_add", add(d, enc[k]));
            d = block(prefix, cfg.decoder_blocks[k - 1], d);
        }
        d = record("out.depth_to_space", depth_to_space(d, 2));
        d = record("out.conv", conv("out.conv", d, 1));
        d = record("out.up", up(d, "out"));
        return record("out.residual_add", add(d, x));
    }

private:
    Tensor<T> conv(const std::string& name, const Tensor<T>& x, std::size_t stride) const {
        return conv2d(x, m_.params.at(name + ".weight"), m_.params.at(name + ".bias"), stride, Padding::same);
    }

    Tensor<T> block(const std::string& prefix, const ConvBlockSpec& spec, Tensor<T> x) {
        for (std::size_t i = 0; i < spec.layer_count; ++i) {
            const std::string name = prefix + ".conv" + std::to_string(i);
            x = record(name, relu(conv(name, x, 1)));
        }
        return x;
    }

    Tensor<T> down(const Tensor<T>& x, const std::string& prefix) const {
        if (m_.config.domain_variant == DomainVariant::wavelet) return dwt2_haar(x);
        return conv(prefix + ".down", x, 2);
    }

    Tensor<T> up(const Tensor<T>& x, const std::string& prefix) const {
        if (m_.config.domain_variant == DomainVariant::wavelet) return idwt2_haar(x);
        const std::string name = prefix + ".up";
        return conv_transpose2d(x, m_.params.at(name + ".weight"), m_.params.at(name + ".bias"), 2);
    }

    Tensor<T> record(const std::string& stage, Tensor<T> t) {
        if (trace_) trace_->push_back({stage, t.shape()});
        return t;
    }

    const Model<T>& m_;
    std::vector<LayerTrace>* trace_;
};

}  // namespace detail

/// Runs the network on x [N,H,W,C]. Output has the input's shape and is not
/// clamped. Optionally records every stage's output shape into `trace`.
template <std::floating_point T>
Tensor<T> forward(const Model<T>& model, const Tensor<T>& x, std::vector<LayerTrace>* trace = nullptr) {
    return detail::ForwardPass<T>(model, trace).run(x);
}

/// Pixel-domain ablation: stride-2 convolutions replace DWT, stride-2
/// transposed convolutions replace IDWT.
template <std::floating_point T>
Tensor<T> forward_strided(const Model<T>& model, const Tensor<T>& x, std::vector<LayerTrace>* trace = nullptr) {
    if (model.config.domain_variant != DomainVariant::strided) {
        throw std::invalid_argument("forward_strided: model was built for the wavelet variant");
    }
    return forward(model, x, trace);
}

/// Human-readable table of stage output shapes and parameter tensors.
template <std::floating_point T>
std::string model_summary(const Model<T>& model, std::size_t height, std::size_t width) {
    std::vector<LayerTrace> trace;
    forward(model, Tensor<T>(Shape{1, height, width, model.config.input_channels}), &trace);
    std::ostringstream os;
    const auto& c = model.config;
    os << "WDRN " << c.levels << "-level, variant " << to_string(c.domain_variant) << ", width_scale "
       << c.width_scale.str() << "\n";
    os << "input [1," << height << "," << width << "," << c.input_channels << "]\n\n";
    os << "stage outputs:\n";
    for (const auto& t : trace) os << "  " << t.stage << "  " << t.output.str() << "\n";
    os << "\nparameters:\n";
    for (const auto& [name, t] : model.params) os << "  " << name << "  " << t.shape().str() << "  " << t.size() << "\n";
    os << "\nparameter_count " << parameter_count(model.params) << "\n";
    return os.str();
}

}  // namespace wdrn
