#pragma once

// Likelihood-free reconstruction-quality measures, baseline distributions,
// percentile scoring, image-quality metrics, and CSV reporting.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pae/csv.hpp"
#include "pae/numerics.hpp"
#include "pae/paired.hpp"

namespace pae {

inline constexpr std::size_t kNumMetrics = 5;
inline constexpr double kDegenerateNorm = 1e-12;

struct MetricRecord {
    std::array<double, kNumMetrics> m{};
    // Set where the quotient's denominator was below 1e-12; the metric then
    // holds the numerator norm.
    std::array<bool, kNumMetrics> degenerate{};
    std::optional<double> ssim;
    std::optional<double> rel_err;

    [[nodiscard]] bool any_degenerate() const {
        return std::any_of(degenerate.begin(), degenerate.end(), [](bool b) { return b; });
    }
};

namespace detail {

inline void set_quotient(MetricRecord& rec, std::size_t k, double num, double den) {
    if (den < kDegenerateNorm) {
        rec.m[k] = num;
        rec.degenerate[k] = true;
    } else {
        rec.m[k] = num / den;
    }
}

}  // namespace detail

// With x_hat = d_x(M_inv(e_y(y))), per row of `y`:
//   m1 = |d_y(e_y(y)) - y| / |y|
//   m2 = |d_x(e_x(x_hat)) - x_hat| / |x_hat|
//   m3 = |d_y(M(e_x(x_hat))) - y| / |y|
//   m4 = |M_inv(e_y(y)) - e_x(x_hat)| / |e_x(x_hat)|
//   m5 = |M(e_x(x_hat)) - e_y(y)| / |e_y(y)|
inline std::vector<MetricRecord> recon_metrics(const PairedModel& model, const Matrix& y) {
    const Eigen::VectorXd y_norm = y.rowwise().norm();
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        if (!(y_norm[i] > 0.0)) throw std::invalid_argument("recon_metrics: zero-norm observation at row " + std::to_string(i));
    }
    if (y.rows() == 0) return {};
    const Matrix zy = model.enc_y.forward(y);
    const Matrix zx_hat = model.map_inv.forward(zy);
    const Matrix x_hat = model.dec_x.forward(zx_hat);
    const Matrix y_ae = model.dec_y.forward(zy);
    const Matrix ex = model.enc_x.forward(x_hat);
    const Matrix x_ae = model.dec_x.forward(ex);
    const Matrix zy_fwd = model.map.forward(ex);
    const Matrix y_fwd = model.dec_y.forward(zy_fwd);

    std::vector<MetricRecord> out(static_cast<std::size_t>(y.rows()));
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        auto& r = out[static_cast<std::size_t>(i)];
        detail::set_quotient(r, 0, (y_ae.row(i) - y.row(i)).norm(), y_norm[i]);
        detail::set_quotient(r, 1, (x_ae.row(i) - x_hat.row(i)).norm(), x_hat.row(i).norm());
        detail::set_quotient(r, 2, (y_fwd.row(i) - y.row(i)).norm(), y_norm[i]);
        detail::set_quotient(r, 3, (zx_hat.row(i) - ex.row(i)).norm(), ex.row(i).norm());
        detail::set_quotient(r, 4, (zy_fwd.row(i) - zy.row(i)).norm(), zy.row(i).norm());
    }
    return out;
}

inline MetricRecord recon_metrics(const PairedModel& model, const Vector& y) {
    return recon_metrics(model, Matrix(y.transpose())).front();
}

// ---------------------------------------------------------------------------
// Image-quality metrics
// ---------------------------------------------------------------------------

inline double rel_err(const Vector& x_hat, const Vector& x) {
    if (x_hat.size() != x.size()) throw std::invalid_argument("rel_err: shape mismatch");
    const double n = x.norm();
    if (!(n > 0.0)) throw std::invalid_argument("rel_err: zero-norm reference");
    return (x_hat - x).norm() / n;
}

// Mean SSIM over all fully contained 7x7 windows with uniform weights,
// k1 = 0.01, k2 = 0.03, sample (n - 1) covariances, and data range
// max(x) - min(x) of the reference (1 when the reference is constant).
inline double ssim(const Matrix& x_hat, const Matrix& x) {
    constexpr Eigen::Index win = 7;
    if (x_hat.rows() != x.rows() || x_hat.cols() != x.cols()) throw std::invalid_argument("ssim: shape mismatch");
    if (x.rows() < win || x.cols() < win) throw std::invalid_argument("ssim: images must be at least 7x7");
    double range = x.maxCoeff() - x.minCoeff();
    if (!(range > 0.0)) range = 1.0;
    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);
    const double np = static_cast<double>(win * win);
    const double cov_norm = np / (np - 1.0);
    double total = 0.0;
    std::size_t count = 0;
    for (Eigen::Index i = 0; i + win <= x.rows(); ++i) {
        for (Eigen::Index j = 0; j + win <= x.cols(); ++j) {
            const auto a = x_hat.block(i, j, win, win).array();
            const auto b = x.block(i, j, win, win).array();
            const double ua = a.mean(), ub = b.mean();
            const double va = cov_norm * ((a * a).mean() - ua * ua);
            const double vb = cov_norm * ((b * b).mean() - ub * ub);
            const double vab = cov_norm * ((a * b).mean() - ua * ub);
            total += ((2 * ua * ub + c1) * (2 * vab + c2)) / ((ua * ua + ub * ub + c1) * (va + vb + c2));
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

inline double ssim(const Vector& x_hat, const Vector& x, std::size_t height, std::size_t width) {
    if (static_cast<std::size_t>(x.size()) != height * width || x_hat.size() != x.size()) {
        throw std::invalid_argument("ssim: vector length does not match image shape");
    }
    const auto h = static_cast<Eigen::Index>(height), w = static_cast<Eigen::Index>(width);
    return ssim(Matrix(ConstMatrixMap(x_hat.data(), h, w)), Matrix(ConstMatrixMap(x.data(), h, w)));
}

// ---------------------------------------------------------------------------
// Baseline and scoring
// ---------------------------------------------------------------------------

inline constexpr std::size_t kMinBaselineSamples = 30;

class Baseline {
public:
    explicit Baseline(const std::vector<MetricRecord>& records) {
        if (records.size() < kMinBaselineSamples) {
            throw std::invalid_argument("baseline needs at least " + std::to_string(kMinBaselineSamples) +
                                        " samples, got " + std::to_string(records.size()));
        }
        for (std::size_t k = 0; k < kNumMetrics; ++k) {
            auto& col = sorted_[k];
            col.reserve(records.size());
            for (const auto& r : records) col.push_back(r.m[k]);
            std::sort(col.begin(), col.end());
        }
    }

    [[nodiscard]] std::size_t count() const { return sorted_[0].size(); }
    [[nodiscard]] const std::vector<double>& values(std::size_t k) const { return sorted_.at(k); }

    // Linear interpolation between order statistics.
    [[nodiscard]] double quantile(std::size_t k, double q) const {
        if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile: q must lie in [0, 1]");
        const auto& v = sorted_.at(k);
        const double pos = q * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, v.size() - 1);
        const double t = pos - static_cast<double>(lo);
        return v[lo] + t * (v[hi] - v[lo]);
    }

    // (#below + 0.5 #equal) / n.
    [[nodiscard]] double percentile(std::size_t k, double value) const {
        const auto& v = sorted_.at(k);
        const auto lo = std::lower_bound(v.begin(), v.end(), value);
        const auto hi = std::upper_bound(lo, v.end(), value);
        const double below = static_cast<double>(lo - v.begin());
        const double equal = static_cast<double>(hi - lo);
        return (below + 0.5 * equal) / static_cast<double>(v.size());
    }

private:
    std::array<std::vector<double>, kNumMetrics> sorted_;
};

inline Baseline fit_baseline(const std::vector<MetricRecord>& records) { return Baseline(records); }

inline Baseline fit_baseline(const PairedModel& model, const Matrix& y) {
    if (static_cast<std::size_t>(y.rows()) < kMinBaselineSamples) {
        throw std::invalid_argument("baseline needs at least " + std::to_string(kMinBaselineSamples) + " samples");
    }
    return Baseline(recon_metrics(model, y));
}

inline constexpr double kFlagPercentile = 0.99;

struct OodScore {
    std::array<double, kNumMetrics> percentile{};
    bool flag = false;
};

// Flagged when any metric sits above the 99th baseline percentile.
inline OodScore ood_score(const Baseline& baseline, const MetricRecord& rec, double threshold = kFlagPercentile) {
    OodScore s;
    for (std::size_t k = 0; k < kNumMetrics; ++k) {
        s.percentile[k] = baseline.percentile(k, rec.m[k]);
        s.flag = s.flag || s.percentile[k] > threshold;
    }
    return s;
}

inline double flag_rate(const Baseline& baseline, const std::vector<MetricRecord>& records,
                        double threshold = kFlagPercentile) {
    if (records.empty()) return 0.0;
    std::size_t n = 0;
    for (const auto& r : records) n += ood_score(baseline, r, threshold).flag ? 1 : 0;
    return static_cast<double>(n) / static_cast<double>(records.size());
}

// P(score_pos > score_neg) + 0.5 P(equal) by rank counting.
inline double auc(std::vector<double> negatives, const std::vector<double>& positives) {
    if (negatives.empty() || positives.empty()) throw std::invalid_argument("auc: both groups must be nonempty");
    std::sort(negatives.begin(), negatives.end());
    double acc = 0.0;
    for (double p : positives) {
        const auto lo = std::lower_bound(negatives.begin(), negatives.end(), p);
        const auto hi = std::upper_bound(lo, negatives.end(), p);
        acc += static_cast<double>(lo - negatives.begin()) + 0.5 * static_cast<double>(hi - lo);
    }
    return acc / (static_cast<double>(negatives.size()) * static_cast<double>(positives.size()));
}

inline std::vector<double> metric_column(const std::vector<MetricRecord>& records, std::size_t k) {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.m.at(k));
    return out;
}

inline double pearson(const Vector& a, const Vector& b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("pearson: need equal lengths >= 2");
    const Vector ca = a.array() - a.mean();
    const Vector cb = b.array() - b.mean();
    const double den = ca.norm() * cb.norm();
    if (!(den > 0.0)) return 0.0;
    return ca.dot(cb) / den;
}

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------

struct ReportOptions {
    std::size_t bins = 64;
    std::pair<std::size_t, std::size_t> scatter{0, 2};  // zero-based metric indices
    double flag_threshold = kFlagPercentile;
};

inline std::string metric_name(std::size_t k) { return "m" + std::to_string(k + 1); }

// Writes metrics.csv, percentiles.csv, histogram_m1..m5.csv and scatter.csv
// into `dir`. Histograms span the pooled baseline + probe range of each metric
// (widened by 0.5 on both sides when that range is a single value) and are
// header-only when there are no probe records.
inline void export_report(const std::vector<MetricRecord>& records, const Baseline& baseline,
                          const std::filesystem::path& dir, const ReportOptions& opt = {}) {
    if (opt.bins == 0) throw std::invalid_argument("export_report: bins must be positive");
    if (opt.scatter.first >= kNumMetrics || opt.scatter.second >= kNumMetrics) {
        throw std::invalid_argument("export_report: scatter metric index out of range");
    }
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());

    {
        CsvWriter w(dir / "metrics.csv");
        w.header({"index", "m1", "m2", "m3", "m4", "m5", "degenerate", "ssim", "rel_err"});
        for (std::size_t i = 0; i < records.size(); ++i) {
            const auto& r = records[i];
            w.field(i).fields(r.m).field(r.any_degenerate() ? 1 : 0);
            w.field(r.ssim ? format_double(*r.ssim) : std::string());
            w.field(r.rel_err ? format_double(*r.rel_err) : std::string());
            w.end_row();
        }
        w.close();
    }
    {
        CsvWriter w(dir / "percentiles.csv");
        w.header({"index", "p1", "p2", "p3", "p4", "p5", "flag"});
        for (std::size_t i = 0; i < records.size(); ++i) {
            const auto s = ood_score(baseline, records[i], opt.flag_threshold);
            w.field(i).fields(s.percentile).field(s.flag ? 1 : 0);
            w.end_row();
        }
        w.close();
    }
    for (std::size_t k = 0; k < kNumMetrics; ++k) {
        CsvWriter w(dir / ("histogram_" + metric_name(k) + ".csv"));
        w.header({"bin", "lo", "hi", "baseline", "probe"});
        if (!records.empty()) {
            const auto& base = baseline.values(k);
            const auto probe = metric_column(records, k);
            double lo = std::min(base.front(), *std::min_element(probe.begin(), probe.end()));
            double hi = std::max(base.back(), *std::max_element(probe.begin(), probe.end()));
            if (!(hi > lo)) {
                lo -= 0.5;
                hi += 0.5;
            }
            const double width = (hi - lo) / static_cast<double>(opt.bins);
            auto bin_of = [&](double v) {
                const auto b = static_cast<std::ptrdiff_t>(std::floor((v - lo) / width));
                return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(opt.bins) - 1));
            };
            std::vector<std::size_t> cb(opt.bins, 0), cp(opt.bins, 0);
            for (double v : base) ++cb[bin_of(v)];
            for (double v : probe) ++cp[bin_of(v)];
            for (std::size_t b = 0; b < opt.bins; ++b) {
                const double edge_hi = b + 1 == opt.bins ? hi : lo + width * static_cast<double>(b + 1);
                w.field(b).field(lo + width * static_cast<double>(b)).field(edge_hi).field(cb[b]).field(cp[b]);
                w.end_row();
            }
        }
        w.close();
    }
    {
        CsvWriter w(dir / "scatter.csv");
        w.header({"index", metric_name(opt.scatter.first), metric_name(opt.scatter.second)});
        for (std::size_t i = 0; i < records.size(); ++i) {
            w.field(i).field(records[i].m[opt.scatter.first]).field(records[i].m[opt.scatter.second]);
            w.end_row();
        }
        w.close();
    }
}

}  // namespace pae
