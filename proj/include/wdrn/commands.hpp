#pragma once

// Command implementations behind the wdrn executable. Each returns a process
// exit code: 0 success, 1 runtime/data error, 2 usage/config error.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "wdrn/config_file.hpp"
#include "wdrn/data.hpp"
#include "wdrn/error.hpp"
#include "wdrn/gradcheck_suite.hpp"
#include "wdrn/metrics.hpp"
#include "wdrn/model.hpp"
#include "wdrn/png_io.hpp"
#include "wdrn/trainer.hpp"

namespace wdrn {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

/// Runs `fn`, mapping exceptions to exit codes and printing the diagnostic.
template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

inline std::vector<std::string> png_names(const std::filesystem::path& dir) {
    std::vector<std::string> out;
    for (const auto& [name, path] : list_files(dir)) {
        if (path.extension() == ".png") out.push_back(name);
    }
    return out;
}

/// Parses repeated `key=value` overrides.
inline KeyValues parse_overrides(const std::vector<std::string>& settings) {
    KeyValues kv;
    for (const auto& s : settings) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError(s, "--set expects key=value, got '" + s + "'");
        }
        kv.emplace_back(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    return kv;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::optional<std::filesystem::path> config;
    std::optional<std::filesystem::path> data;
    std::optional<std::size_t> synthetic;
    std::filesystem::path out;
    std::vector<std::string> settings;  ///< `key=value`, applied after the config file
};

/// Settings precedence: built-in defaults, then the config file, then
/// `--set` overrides in order.
inline RunConfig resolve_run_config(const TrainArgs& a) {
    RunConfig rc;
    if (a.config) {
        const KeyValues kv = read_config_file(*a.config);
        require_keys(kv, required_config_keys());
        apply_settings(rc, kv);
    }
    apply_settings(rc, detail::parse_overrides(a.settings));
    rc.train.validate();
    layer_plan(rc.model());
    return rc;
}

inline int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        if (a.data.has_value() == a.synthetic.has_value()) {
            throw ConfigError("data", "train needs exactly one of --data or --synthetic");
        }
        const RunConfig rc = resolve_run_config(a);
        const WdrnConfig model_config = rc.model();

        std::vector<ImagePair> pairs;
        if (a.data) {
            pairs = load_paired_dataset(*a.data);
        } else {
            if (*a.synthetic == 0) throw ConfigError("synthetic", "--synthetic needs at least one pair");
            pairs = synthetic_dataset(*a.synthetic, rc.image_size, rc.train.seed);
        }
        if (pairs.empty()) throw DataError("no training pairs found");
        const Shape& s0 = pairs.front().input_image.shape();
        for (const auto& p : pairs) {
            const Shape& s = p.input_image.shape();
            if (s != s0) throw DataError(p.name + ": size " + s.str() + " differs from " + s0.str());
            if (s.height % model_config.divisor() != 0 || s.width % model_config.divisor() != 0) {
                throw DataError(p.name + ": " + std::to_string(s.width) + "x" + std::to_string(s.height) +
                                " is not divisible by " + std::to_string(model_config.divisor()));
            }
        }
        const DatasetSplit split_data = split(pairs, rc.split_fractions, rc.train.seed);

        std::filesystem::create_directories(a.out);
        {
            std::ofstream f(a.out / "summary.txt");
            f << model_summary(build<float>(model_config, rc.train.seed), s0.height, s0.width);
            f << "\nsplit train " << split_data.train.size() << ", val " << split_data.val.size() << ", test "
              << split_data.test.size() << "\n";
            if (!f) throw DataError("cannot write " + (a.out / "summary.txt").string());
        }
        {
            std::ofstream f(a.out / "split.tsv");
            write_split_manifest(f, split_data);
        }

        TrainOutputs outputs;
        outputs.log_csv = a.out / "log.csv";
        outputs.final_checkpoint = a.out / "checkpoint.wdrn";
        if (!split_data.val.empty()) outputs.best_checkpoint = a.out / "best.wdrn";
        const auto t0 = std::chrono::steady_clock::now();
        const TrainResult r = train(model_config, split_data, rc.train, outputs);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        out << "trained " << r.epochs.size() << " epochs (" << r.steps.size() << " steps) in " << secs << " s\n";
        if (!r.epochs.empty()) out << "last epoch: " << format_epoch_log(r.epochs.back()) << "\n";
        out << "wrote " << a.out.string() << "\n";
        return kExitOk;
    });
}

// ---------------------------------------------------------------------------
// infer

struct InferArgs {
    std::filesystem::path checkpoint;
    std::filesystem::path input;
    std::filesystem::path out;
};

inline int cmd_infer(const InferArgs& a, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const Checkpoint c = load_checkpoint(a.checkpoint);
        const Model<float> model{c.config, c.params};
        const auto names = detail::png_names(a.input);
        if (names.empty()) {
            err << "warning: no PNG files in " << a.input.string() << "\n";
            return kExitOk;
        }
        std::filesystem::create_directories(a.out);
        NoGradGuard no_grad;
        std::size_t failures = 0;
        for (const auto& name : names) {
            try {
                const Tensor<float> x = to_tensor(read_png_rgb8(a.input / name));
                const auto t0 = std::chrono::steady_clock::now();
                const Tensor<float> y = forward(model, x);
                const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
                write_png_rgb8(a.out / name, to_rgb8(y));
                out << name << " " << ms << " ms\n";
            } catch (const std::exception& e) {
                ++failures;
                err << "error: " << name << ": " << e.what() << "\n";
            }
        }
        return failures ? kExitRuntime : kExitOk;
    });
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::filesystem::path pred;
    std::filesystem::path gt;
    std::optional<std::filesystem::path> lpips;
    std::optional<std::filesystem::path> out;  ///< CSV destination; stdout when unset
};

/// Reads `name,lpips` rows (header optional).
inline std::map<std::string, double> read_lpips_csv(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open " + path.string());
    std::map<std::string, double> out;
    std::string line;
    for (std::size_t lineno = 1; std::getline(f, line); ++lineno) {
        const std::string body = trim(line);
        if (body.empty() || body.front() == '#') continue;
        const auto comma = body.find(',');
        if (comma == std::string::npos) throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected name,lpips");
        const std::string name = trim(body.substr(0, comma));
        const std::string value = trim(body.substr(comma + 1));
        if (lineno == 1 && name == "name") continue;
        try {
            std::size_t used = 0;
            const double v = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
            out[name] = v;
        } catch (const std::exception&) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad lpips value '" + value + "'");
        }
    }
    return out;
}

inline int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const LossConfig cfg;
        std::map<std::string, double> lpips;
        if (a.lpips) lpips = read_lpips_csv(*a.lpips);
        std::vector<EvalRow> rows;
        std::size_t failures = 0;
        for (const auto& name : detail::png_names(a.pred)) {
            EvalRow row{name, std::nullopt};
            try {
                if (!std::filesystem::exists(a.gt / name)) throw DataError("missing ground truth " + (a.gt / name).string());
                const Tensor<float> p = to_tensor(read_png_rgb8(a.pred / name));
                const Tensor<float> g = to_tensor(read_png_rgb8(a.gt / name));
                std::optional<double> l;
                if (auto it = lpips.find(name); it != lpips.end()) l = it->second;
                row.report = make_report(psnr(p, g), ssim_metric(p, g, cfg), l);
            } catch (const std::exception& e) {
                ++failures;
                err << "error: " << name << ": " << e.what() << "\n";
            }
            rows.push_back(std::move(row));
        }
        if (a.out) {
            std::ofstream f(*a.out);
            write_metrics_csv(f, rows, cfg);
            if (!f) throw DataError("cannot write " + a.out->string());
        } else {
            write_metrics_csv(out, rows, cfg);
        }
        return failures ? kExitRuntime : kExitOk;
    });
}

// ---------------------------------------------------------------------------
// ablate

struct AblateArgs {
    std::string which;  ///< "domain" or "levels"
    std::size_t synthetic = 8;
    std::size_t steps = 100;
    std::uint64_t seed = 0;
    Ratio width_scale{1, 8};
    std::size_t image_size = 64;
    double lr = 1e-3;
    std::optional<std::filesystem::path> out;
};

struct AblationRow {
    std::string variant;
    double psnr_db = 0, ssim = 0, initial_loss = 0, final_loss = 0;
};

inline constexpr const char* kAblationHeader = "variant,psnr_db,ssim,initial_loss,final_loss";

/// Trains every variant on the same synthetic training split for `steps`
/// full-batch Adam steps; metrics come from the held-out test split.
inline std::vector<AblationRow> run_ablation(const AblateArgs& a, std::ostream& log) {
    std::vector<std::pair<std::string, WdrnConfig>> variants;
    if (a.which == "domain") {
        variants = {{"wavelet", WdrnConfig::standard(3, DomainVariant::wavelet, a.width_scale)},
                    {"strided", WdrnConfig::standard(3, DomainVariant::strided, a.width_scale)}};
    } else if (a.which == "levels") {
        for (std::size_t l : {2, 3, 4}) {
            variants.emplace_back(std::to_string(l) + " level", WdrnConfig::standard(l, DomainVariant::wavelet, a.width_scale));
        }
    } else {
        throw ConfigError("which", "--which must be 'domain' or 'levels', got '" + a.which + "'");
    }
    if (a.synthetic < 2) throw ConfigError("synthetic", "ablation needs at least 2 synthetic pairs");
    if (a.steps == 0) throw ConfigError("steps", "ablation needs at least one step");

    const auto pairs = synthetic_dataset(a.synthetic, a.image_size, a.seed);
    const std::size_t n_test = std::max<std::size_t>(1, a.synthetic / 4);
    const double test_fraction = static_cast<double>(n_test) / static_cast<double>(a.synthetic);
    const DatasetSplit data = split(pairs, {1.0 - test_fraction, 0.0, test_fraction}, a.seed);

    TrainConfig tc;
    tc.epochs = a.steps;
    tc.batch_size = data.train.size();
    tc.lr = a.lr;
    tc.lr_decay = 1.0;
    tc.lr_decay_every = 0;
    tc.seed = a.seed;

    std::vector<AblationRow> rows;
    for (const auto& [name, config] : variants) {
        const auto t0 = std::chrono::steady_clock::now();
        AblationRow row;
        row.variant = name;
        row.initial_loss = dataset_loss(build<float>(config, tc.seed), data.train, tc.loss);
        const TrainResult r = train(config, data, tc);
        const Model<float> trained{config, r.final_state.params};
        row.final_loss = dataset_loss(trained, data.train, tc.loss);
        std::tie(row.psnr_db, row.ssim) = evaluate(trained, data.test, tc.loss);
        log << name << ": loss " << row.initial_loss << " -> " << row.final_loss << " ("
            << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s)\n";
        rows.push_back(row);
    }
    return rows;
}

inline void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows) {
    os << kAblationHeader << '\n';
    for (const auto& r : rows) {
        os << r.variant << ',' << format_metric(r.psnr_db) << ',' << format_metric(r.ssim) << ','
           << format_metric(r.initial_loss) << ',' << format_metric(r.final_loss) << '\n';
    }
}

inline int cmd_ablate(const AblateArgs& a, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const auto rows = run_ablation(a, err);
        if (a.out) {
            std::ofstream f(*a.out);
            write_ablation_csv(f, rows);
            if (!f) throw DataError("cannot write " + a.out->string());
        } else {
            write_ablation_csv(out, rows);
        }
        return kExitOk;
    });
}

// ---------------------------------------------------------------------------
// gradcheck

inline int cmd_gradcheck(const GradcheckOptions& opt, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const auto rows = run_gradcheck_suite(opt);
        out << "op,max_rel_error,checked,status\n";
        bool ok = true;
        for (const auto& r : rows) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.3e", r.max_rel_error);
            out << r.op << ',' << buf << ',' << r.checked << ',' << (r.passed ? "ok" : "FAIL") << '\n';
            ok = ok && r.passed;
        }
        if (!ok) err << "gradcheck: relative error above " << opt.threshold << "\n";
        return ok ? kExitOk : kExitRuntime;
    });
}

}  // namespace wdrn
