#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "wdrn/data.hpp"
#include "wdrn/error.hpp"
#include "wdrn/losses.hpp"
#include "wdrn/metrics.hpp"
#include "wdrn/model.hpp"

namespace wdrn {

struct TrainConfig {
    std::size_t epochs = 150;
    std::size_t batch_size = 10;
    double lr = 1e-4;
    double lr_decay = 0.5;
    std::size_t lr_decay_every = 100;  ///< 0 disables decay
    double beta1 = 0.9;
    double beta2 = 0.99;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    LossConfig loss;
    std::optional<std::size_t> early_stop_epoch;

    void validate() const {
        if (!(lr >= 0) || !std::isfinite(lr)) throw ConfigError("lr", "lr must be a finite non-negative number");
        if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("beta1", "beta1 must lie in [0, 1)");
        if (!(beta2 >= 0 && beta2 < 1)) throw ConfigError("beta2", "beta2 must lie in [0, 1)");
        if (!(adam_eps >= 0)) throw ConfigError("adam_eps", "adam_eps must be >= 0");
        if (batch_size == 0) throw ConfigError("batch_size", "batch_size must be >= 1");
        if (!(lr_decay > 0)) throw ConfigError("lr_decay", "lr_decay must be > 0");
        loss.validate();
    }
};

/// Step-decayed learning rate: lr * decay^floor(epoch / decay_every).
inline double lr_at(std::size_t epoch, const TrainConfig& cfg) {
    if (cfg.lr_decay_every == 0) return cfg.lr;
    return cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch / cfg.lr_decay_every));
}

struct AdamState {
    std::uint64_t step = 0;
    std::vector<std::vector<double>> m;  ///< first moments, one array per parameter tensor
    std::vector<std::vector<double>> v;  ///< second moments

    friend bool operator==(const AdamState&, const AdamState&) = default;

    static AdamState zeros_like(const ParameterSet<float>& params) {
        AdamState s;
        for (const auto& [_, t] : params) {
            s.m.emplace_back(t.size(), 0.0);
            s.v.emplace_back(t.size(), 0.0);
        }
        return s;
    }
};

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
};

/// One Adam update using the gradients currently stored on `params`.
/// Moments and the update are kept in double precision; only the parameter
/// itself is rounded to single precision.
inline void adam_step(ParameterSet<float>& params, AdamState& state, double lr, const AdamHyper& h) {
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw std::invalid_argument("adam_step: optimizer state does not match the parameter set");
    }
    for (const auto& [name, t] : params) {
        if (!t.has_grad()) throw std::invalid_argument("adam_step: parameter " + name + " has no gradient");
    }
    ++state.step;
    const auto t = static_cast<double>(state.step);
    const double correct1 = 1.0 - std::pow(h.beta1, t);
    const double correct2 = 1.0 - std::pow(h.beta2, t);
    std::size_t k = 0;
    for (auto& [name, p] : params) {
        auto w = p.data();
        auto g = p.grad();
        auto& m = state.m[k];
        auto& v = state.v[k];
        if (m.size() != w.size()) throw std::invalid_argument("adam_step: moment size mismatch for " + name);
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = g[i];
            m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * gi;
            v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * gi * gi;
            const double mhat = m[i] / correct1;
            const double vhat = v[i] / correct2;
            w[i] = static_cast<float>(static_cast<double>(w[i]) - lr * mhat / (std::sqrt(vhat) + h.eps));
        }
        ++k;
    }
}

// ---------------------------------------------------------------------------
// Checkpoint: little-endian binary.
//
//   "WDRN" | u32 version
//   config: u32 levels | u8 variant | u32 scale_num | u32 scale_den | u32 input_channels
//           | u32 n_enc | n_enc x (u32 layers, filters, final_filters, kernel) | u32 n_dec | ...
//   u32 n_params | n_params x (u32 name_len | name | u32 dims[4] | f32 values[])
//   u64 adam_step | n_params x (f64 m[] | f64 v[])
//   u32 epoch | u32 rng_len | rng state text

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'W', 'D', 'R', 'N'};

struct Checkpoint {
    WdrnConfig config;
    ParameterSet<float> params;
    AdamState adam;
    std::uint32_t epoch = 0;
    std::string rng_state;
};

namespace detail {

class ByteWriter {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32s(std::span<const float> vs) {
        for (float f : vs) u32(std::bit_cast<std::uint32_t>(f));
    }
    void f64s(std::span<const double> vs) {
        for (double d : vs) u64(std::bit_cast<std::uint64_t>(d));
    }
    void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

    std::uint8_t u8() { return need(1)[0]; }
    std::uint32_t u32() {
        auto b = need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        auto b = need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }
    std::vector<float> f32s(std::size_t n) {
        if (n > remaining() / 4) truncated();
        std::vector<float> out(n);
        for (auto& f : out) f = std::bit_cast<float>(u32());
        return out;
    }
    std::vector<double> f64s(std::size_t n) {
        if (n > remaining() / 8) truncated();
        std::vector<double> out(n);
        for (auto& d : out) d = std::bit_cast<double>(u64());
        return out;
    }
    std::string bytes(std::size_t n) {
        auto b = need(n);
        return {b.begin(), b.end()};
    }
    std::size_t remaining() const { return in_.size() - pos_; }

private:
    [[noreturn]] static void truncated() {
        throw CheckpointError(CheckpointErrorKind::truncated, "checkpoint truncated");
    }
    std::span<const std::uint8_t> need(std::size_t n) {
        if (n > remaining()) truncated();
        auto s = in_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

inline void write_blocks(ByteWriter& w, const std::vector<ConvBlockSpec>& blocks) {
    w.u32(static_cast<std::uint32_t>(blocks.size()));
    for (const auto& b : blocks) {
        w.u32(static_cast<std::uint32_t>(b.layer_count));
        w.u32(static_cast<std::uint32_t>(b.filters));
        w.u32(static_cast<std::uint32_t>(b.final_filters));
        w.u32(static_cast<std::uint32_t>(b.kernel));
    }
}

inline std::vector<ConvBlockSpec> read_blocks(ByteReader& r) {
    const std::uint32_t n = r.u32();
    if (n > 16) throw CheckpointError(CheckpointErrorKind::corrupt, "checkpoint: implausible block count");
    std::vector<ConvBlockSpec> out(n);
    for (auto& b : out) {
        b.layer_count = r.u32();
        b.filters = r.u32();
        b.final_filters = r.u32();
        b.kernel = r.u32();
    }
    return out;
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
    detail::ByteWriter w;
    w.bytes(std::string_view(kCheckpointMagic, 4));
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(c.config.levels));
    w.u8(static_cast<std::uint8_t>(c.config.domain_variant));
    w.u32(c.config.width_scale.num);
    w.u32(c.config.width_scale.den);
    w.u32(static_cast<std::uint32_t>(c.config.input_channels));
    detail::write_blocks(w, c.config.encoder_blocks);
    detail::write_blocks(w, c.config.decoder_blocks);
    w.u32(static_cast<std::uint32_t>(c.params.size()));
    for (const auto& [name, t] : c.params) {
        w.u32(static_cast<std::uint32_t>(name.size()));
        w.bytes(name);
        const Shape& s = t.shape();
        for (auto d : {s.batch, s.height, s.width, s.channels}) w.u32(static_cast<std::uint32_t>(d));
        w.f32s(t.data());
    }
    w.u64(c.adam.step);
    if (c.adam.m.size() != c.params.size() || c.adam.v.size() != c.params.size()) {
        throw std::invalid_argument("serialize_checkpoint: optimizer state does not match parameters");
    }
    for (std::size_t i = 0; i < c.params.size(); ++i) {
        w.f64s(c.adam.m[i]);
        w.f64s(c.adam.v[i]);
    }
    w.u32(c.epoch);
    w.u32(static_cast<std::uint32_t>(c.rng_state.size()));
    w.bytes(c.rng_state);
    return w.take();
}

inline Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    if (bytes.size() < 4) throw CheckpointError(CheckpointErrorKind::truncated, "checkpoint truncated");
    if (r.bytes(4) != std::string_view(kCheckpointMagic, 4)) {
        throw CheckpointError(CheckpointErrorKind::bad_magic, "bad magic: not a WDRN checkpoint");
    }
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw CheckpointError(CheckpointErrorKind::version_mismatch,
                              "checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                  std::to_string(kCheckpointVersion) + ")");
    }
    Checkpoint c;
    c.config.levels = r.u32();
    const std::uint8_t variant = r.u8();
    if (variant > 1) throw CheckpointError(CheckpointErrorKind::corrupt, "checkpoint: unknown model variant");
    c.config.domain_variant = static_cast<DomainVariant>(variant);
    c.config.width_scale.num = r.u32();
    c.config.width_scale.den = r.u32();
    c.config.input_channels = r.u32();
    c.config.encoder_blocks = detail::read_blocks(r);
    c.config.decoder_blocks = detail::read_blocks(r);

    std::vector<LayerSpec> plan;
    try {
        plan = layer_plan(c.config);
    } catch (const std::exception& e) {
        throw CheckpointError(CheckpointErrorKind::corrupt, std::string("checkpoint: invalid model config: ") + e.what());
    }
    std::vector<std::pair<std::string, Shape>> expected;
    for (const auto& l : plan) {
        expected.push_back({l.name + ".weight", Shape{l.kernel_h, l.kernel_w, l.in_channels, l.out_channels}});
        expected.push_back({l.name + ".bias", Shape{1, 1, 1, l.out_channels}});
    }

    const std::uint32_t n = r.u32();
    if (n != expected.size()) {
        throw CheckpointError(CheckpointErrorKind::shape_mismatch,
                              "shape mismatch: checkpoint holds " + std::to_string(n) + " tensors, config needs " +
                                  std::to_string(expected.size()));
    }
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint32_t len = r.u32();
        std::string name = r.bytes(len);
        Shape s{r.u32(), r.u32(), r.u32(), r.u32()};
        if (name != expected[i].first || s != expected[i].second) {
            throw CheckpointError(CheckpointErrorKind::shape_mismatch,
                                  "shape mismatch: tensor '" + name + "' " + s.str() + " but config expects '" +
                                      expected[i].first + "' " + expected[i].second.str());
        }
        c.params.add(std::move(name), Tensor<float>(s, r.f32s(s.size())));
    }
    c.adam.step = r.u64();
    for (const auto& [_, t] : c.params) {
        c.adam.m.push_back(r.f64s(t.size()));
        c.adam.v.push_back(r.f64s(t.size()));
    }
    c.epoch = r.u32();
    c.rng_state = r.bytes(r.u32());
    if (r.remaining() != 0) {
        throw CheckpointError(CheckpointErrorKind::corrupt, "checkpoint has " + std::to_string(r.remaining()) +
                                                                " trailing bytes");
    }
    return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(c);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError(CheckpointErrorKind::io, "cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw CheckpointError(CheckpointErrorKind::io, "write to " + path.string() + " failed");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError(CheckpointErrorKind::io, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    return deserialize_checkpoint(bytes);
}

/// Copies checkpoint tensors into an existing parameter set of matching layout.
inline void restore_parameters(ParameterSet<float>& into, const ParameterSet<float>& from) {
    if (into.size() != from.size()) {
        throw CheckpointError(CheckpointErrorKind::shape_mismatch,
                              "shape mismatch: model has " + std::to_string(into.size()) +
                                  " tensors, checkpoint has " + std::to_string(from.size()));
    }
    auto src = from.begin();
    for (auto& [name, t] : into) {
        if (src->first != name || src->second.shape() != t.shape()) {
            throw CheckpointError(CheckpointErrorKind::shape_mismatch,
                                  "shape mismatch: model tensor '" + name + "' " + t.shape().str() +
                                      " vs checkpoint '" + src->first + "' " + src->second.shape().str());
        }
        std::copy(src->second.data().begin(), src->second.data().end(), t.data().begin());
        ++src;
    }
}

// ---------------------------------------------------------------------------
// Training loop.

struct StepLog {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double mae = 0, ssim_loss = 0, gray = 0, total = 0;
};

struct EpochLog {
    std::size_t epoch = 0;
    double lr = 0;
    double mae = 0, ssim_loss = 0, gray = 0, total = 0;
    std::optional<double> val_psnr, val_ssim;
};

inline constexpr const char* kTrainLogHeader = "epoch,lr,mae,ssim_loss,gray,total,val_psnr,val_ssim";

inline std::string format_epoch_log(const EpochLog& e) {
    std::ostringstream os;
    os << e.epoch << ',' << format_metric(e.lr) << ',' << format_metric(e.mae) << ',' << format_metric(e.ssim_loss)
       << ',' << format_metric(e.gray) << ',' << format_metric(e.total) << ',';
    if (e.val_psnr) os << format_metric(*e.val_psnr);
    os << ',';
    if (e.val_ssim) os << format_metric(*e.val_ssim);
    return os.str();
}

struct TrainResult {
    Checkpoint final_state;
    std::optional<Checkpoint> best;  ///< highest validation SSIM, when a validation split exists
    std::vector<EpochLog> epochs;
    std::vector<StepLog> steps;
};

/// Where train() writes its artifacts; all optional.
struct TrainOutputs {
    std::optional<std::filesystem::path> log_csv;
    std::optional<std::filesystem::path> final_checkpoint;
    std::optional<std::filesystem::path> best_checkpoint;
};

inline std::string rng_text(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

/// Mean validation PSNR / SSIM of the float network outputs.
inline std::pair<double, double> evaluate(const Model<float>& model, const std::vector<ImagePair>& pairs,
                                          const LossConfig& loss) {
    NoGradGuard no_grad;
    double p = 0, s = 0;
    for (const auto& pair : pairs) {
        const auto out = forward(model, pair.input_image);
        p += psnr(out, pair.target_image, 1.0);
        s += ssim_metric(out, pair.target_image, loss);
    }
    const auto n = static_cast<double>(pairs.size());
    return {p / n, s / n};
}

/// Mean total loss of the current model over `pairs` (no gradient).
inline double dataset_loss(const Model<float>& model, const std::vector<ImagePair>& pairs, const LossConfig& loss) {
    NoGradGuard no_grad;
    double sum = 0;
    for (const auto& pair : pairs) {
        sum += static_cast<double>(total_loss(forward(model, pair.input_image), pair.target_image, loss).total.item());
    }
    return sum / static_cast<double>(pairs.size());
}

/// Mini-batch Adam training from a freshly built model seeded with cfg.seed.
inline TrainResult train(const WdrnConfig& model_config, const DatasetSplit& data, const TrainConfig& cfg,
                         const TrainOutputs& outputs = {}) {
    cfg.validate();
    if (data.train.empty()) throw TrainingError("train: the training split is empty");

    Model<float> model = build<float>(model_config, cfg.seed);
    AdamState adam = AdamState::zeros_like(model.params);
    std::mt19937_64 rng(cfg.seed ^ 0x5eed5eed5eed5eedull);
    const AdamHyper hyper{cfg.beta1, cfg.beta2, cfg.adam_eps};

    std::optional<std::ofstream> log;
    if (outputs.log_csv) {
        log.emplace(*outputs.log_csv, std::ios::trunc);
        if (!*log) throw TrainingError("cannot open " + outputs.log_csv->string());
        *log << kTrainLogHeader << '\n';
    }

    auto snapshot = [&](std::uint32_t epoch) {
        return Checkpoint{model_config, model.params.clone(), adam, epoch, rng_text(rng)};
    };

    TrainResult result;
    std::optional<double> best_ssim;
    std::vector<std::size_t> order(data.train.size());
    std::size_t step = 0;
    const std::size_t last_epoch = cfg.early_stop_epoch ? std::min(cfg.epochs, *cfg.early_stop_epoch) : cfg.epochs;

    for (std::size_t epoch = 0; epoch < last_epoch; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

        const double lr = lr_at(epoch, cfg);
        EpochLog e;
        e.epoch = epoch;
        e.lr = lr;
        std::size_t steps_this_epoch = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::vector<const Tensor<float>*> inputs, targets;
            for (std::size_t j = start; j < std::min(order.size(), start + cfg.batch_size); ++j) {
                inputs.push_back(&data.train[order[j]].input_image);
                targets.push_back(&data.train[order[j]].target_image);
            }
            const Tensor<float> x = stack(inputs);
            const Tensor<float> y = stack(targets);

            model.params.zero_grad();
            const auto terms = total_loss(forward(model, x), y, cfg.loss);
            const StepLog s{step, epoch, terms.mae.item(), terms.ssim.item(), terms.gray.item(), terms.total.item()};
            if (!std::isfinite(s.total)) {
                throw TrainingError("non-finite loss at step " + std::to_string(step) + " (epoch " +
                                    std::to_string(epoch) + "): total=" + format_metric(s.total));
            }
            backward(terms.total);
            adam_step(model.params, adam, lr, hyper);

            result.steps.push_back(s);
            e.mae += s.mae, e.ssim_loss += s.ssim_loss, e.gray += s.gray, e.total += s.total;
            ++steps_this_epoch;
            ++step;
        }
        const auto n = static_cast<double>(steps_this_epoch);
        e.mae /= n, e.ssim_loss /= n, e.gray /= n, e.total /= n;

        if (!data.val.empty()) {
            const auto [vp, vs] = evaluate(model, data.val, cfg.loss);
            e.val_psnr = vp;
            e.val_ssim = vs;
            if (!best_ssim || vs > *best_ssim) {
                best_ssim = vs;
                result.best = snapshot(static_cast<std::uint32_t>(epoch + 1));
                if (outputs.best_checkpoint) save_checkpoint(*result.best, *outputs.best_checkpoint);
            }
        }
        if (log) *log << format_epoch_log(e) << '\n' << std::flush;
        result.epochs.push_back(e);
    }

    result.final_state = snapshot(static_cast<std::uint32_t>(last_epoch));
    if (outputs.final_checkpoint) save_checkpoint(result.final_state, *outputs.final_checkpoint);
    return result;
}

}  // namespace wdrn
