#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "wdrn/losses.hpp"
#include "wdrn/tensor.hpp"

namespace wdrn {

/// 10 log10(peak^2 / MSE). Identical inputs give +infinity.
template <std::floating_point T>
double psnr(const Tensor<T>& pred, const Tensor<T>& target, double peak = 1.0) {
    require_same_shape(pred.shape(), target.shape(), "psnr");
    if (!(peak > 0)) throw std::invalid_argument("psnr: peak must be positive");
    auto a = pred.data(), b = target.data();
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        sq += d * d;
    }
    const double mse = sq / static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

/// Mean SSIM map value; shares its computation with ssim_loss but always
/// evaluates in double precision.
template <std::floating_point T>
double ssim_metric(const Tensor<T>& pred, const Tensor<T>& target, const LossConfig& cfg) {
    return ssim_index(pred.template cast<double>(), target.template cast<double>(), cfg).item();
}

/// Mean perceptual score: 0.5 (S + (1 - L)).
inline double mps(double ssim, double lpips) { return 0.5 * (ssim + (1.0 - lpips)); }

struct MetricsReport {
    double psnr_db = 0.0;
    double ssim = 0.0;
    std::optional<double> lpips;
    std::optional<double> mps;
};

inline MetricsReport make_report(double psnr_db, double ssim, std::optional<double> lpips = std::nullopt) {
    MetricsReport r{psnr_db, ssim, lpips, std::nullopt};
    if (lpips) r.mps = mps(ssim, *lpips);
    return r;
}

/// Numeric cell for CSV output; infinities print as "inf".
inline std::string format_metric(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

struct EvalRow {
    std::string name;
    std::optional<MetricsReport> report;  ///< empty when the pair could not be evaluated
};

/// Mean over the evaluated rows; LPIPS/MPS only when every row has them.
inline std::optional<MetricsReport> aggregate(const std::vector<EvalRow>& rows) {
    std::size_t n = 0;
    double p = 0, s = 0, l = 0;
    bool all_lpips = true;
    for (const auto& r : rows) {
        if (!r.report) continue;
        ++n;
        p += r.report->psnr_db;
        s += r.report->ssim;
        if (r.report->lpips) l += *r.report->lpips;
        else all_lpips = false;
    }
    if (n == 0) return std::nullopt;
    const double dn = static_cast<double>(n);
    return make_report(p / dn, s / dn, all_lpips ? std::optional<double>(l / dn) : std::nullopt);
}

/// Writes `name,psnr_db,ssim,lpips,mps` rows followed by a `mean` row.
inline void write_metrics_csv(std::ostream& os, const std::vector<EvalRow>& rows, const LossConfig& cfg) {
    os << "# ssim: per-channel mean over valid " << cfg.ssim_window << "x" << cfg.ssim_window
       << " gaussian windows (sigma " << cfg.ssim_sigma << ")\n";
    os << "name,psnr_db,ssim,lpips,mps\n";
    auto line = [&](const std::string& name, const std::optional<MetricsReport>& r) {
        os << name << ',';
        if (r) {
            os << format_metric(r->psnr_db) << ',' << format_metric(r->ssim) << ',';
            if (r->lpips) os << format_metric(*r->lpips);
            os << ',';
            if (r->mps) os << format_metric(*r->mps);
        } else {
            os << ",,,";
        }
        os << '\n';
    };
    for (const auto& r : rows) line(r.name, r.report);
    line("mean", aggregate(rows));
}

}  // namespace wdrn
