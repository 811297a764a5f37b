#pragma once

// Command implementations behind the `pae` executable: dataset assembly from
// a run config, training to a checkpoint, direct/LSI inversion, OOD reports,
// posterior sampling and latent export. Every artifact is CSV (17 significant
// digits) or a PAE1 checkpoint, and is byte-deterministic for fixed inputs.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pae/checkpoint.hpp"
#include "pae/config.hpp"
#include "pae/csv.hpp"
#include "pae/datagen.hpp"
#include "pae/inversion.hpp"
#include "pae/linear_pae.hpp"
#include "pae/ood_metrics.hpp"
#include "pae/paired.hpp"
#include "pae/variational.hpp"

namespace pae::cli {

namespace fs = std::filesystem;

// Stream indices for Rng::derive on the run seed.
namespace streams {
inline constexpr std::uint64_t images = 0;
inline constexpr std::uint64_t train_pairs = 1;
inline constexpr std::uint64_t validation_pairs = 2;
inline constexpr std::uint64_t ood_pairs = 3;
inline constexpr std::uint64_t model_init = 4;
inline constexpr std::uint64_t train_order = 5;
inline constexpr std::uint64_t latent_map = 6;
inline constexpr std::uint64_t calibration_images = 7;
inline constexpr std::uint64_t calibration_pairs = 8;
}  // namespace streams

struct DeskData {
    PairSet train;
    PairSet validation;      // `corruption`
    PairSet validation_ood;  // `ood_corruption`, same clean images as `validation`
    PairSet calibration;     // held out, `corruption`
    std::size_t height = 0;
    std::size_t width = 0;
};

inline DeskData build_data(const RunConfig& cfg) {
    Rng root(cfg.seed);
    ImageSet train_imgs, val_imgs, calib_imgs;
    const auto& d = cfg.data;
    if (d.source == "idx") {
        const ImageSet all = load_idx_images(d.path);
        if (d.train + d.validation > all.count()) {
            throw ConfigError("data: '" + d.path + "' holds " + std::to_string(all.count()) + " images, need " +
                              std::to_string(d.train + d.validation));
        }
        train_imgs = all.slice(0, d.train);
        val_imgs = all.slice(d.train, d.validation);
        const std::size_t rest = all.count() - d.train - d.validation;
        calib_imgs = all.slice(d.train + d.validation, std::min(rest, d.calibration));
    } else {
        Rng img_rng = root.derive(streams::images);
        const ImageSet all = gen_shapes(img_rng, d.train + d.validation, d.height, d.width);
        train_imgs = all.slice(0, d.train);
        val_imgs = all.slice(d.train, d.validation);
        Rng calib_rng = root.derive(streams::calibration_images);
        calib_imgs = gen_shapes(calib_rng, d.calibration, d.height, d.width);
    }
    DeskData out;
    out.height = train_imgs.height();
    out.width = train_imgs.width();
    Rng r1 = root.derive(streams::train_pairs), r2 = root.derive(streams::validation_pairs);
    Rng r3 = root.derive(streams::ood_pairs), r4 = root.derive(streams::calibration_pairs);
    out.train = make_pairs(train_imgs, cfg.corruption, r1);
    out.validation = make_pairs(val_imgs, cfg.corruption, r2);
    out.validation_ood = make_pairs(val_imgs, cfg.ood_corruption, r3);
    out.calibration = make_pairs(calib_imgs, cfg.corruption, r4);
    return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct LogRow {
    std::string stage;
    std::size_t epoch;
    double loss;
};

struct TrainOutcome {
    Checkpoint checkpoint;
    std::vector<LogRow> log;
};

inline TrainOutcome train_model(const RunConfig& cfg, const PairSet& train,
                                const std::function<void(const LogRow&)>& progress = {}) {
    TrainOutcome out;
    out.checkpoint.config = cfg;
    const auto dim_x = static_cast<std::size_t>(train.x.cols());
    const auto dim_y = static_cast<std::size_t>(train.y.cols());
    Rng root(cfg.seed);
    Rng init = root.derive(streams::model_init);
    TrainConfig tc = cfg.train;
    tc.seed = root.derive(streams::train_order).seed();

    auto logger = [&](const std::string& stage) {
        return [&, stage](std::size_t epoch, double loss) {
            out.log.push_back({stage, epoch, loss});
            if (progress) progress(out.log.back());
        };
    };
    auto record_history = [&](const std::string& stage, const std::vector<double>& h) {
        // Epoch rows arrive through the callback; prepend the initial loss.
        out.log.insert(out.log.end() - static_cast<std::ptrdiff_t>(h.size() - 1), LogRow{stage, 0, h.front()});
    };

    switch (cfg.kind) {
        case ModelKind::identity: {
            if (dim_x != dim_y) throw ConfigError("model.kind identity requires equal x and y dimensions");
            out.checkpoint.paired = PairedModel::identity(dim_x);
            out.log.push_back({"identity", 0, paired_loss(*out.checkpoint.paired, train.x, train.y, tc, false).value});
            break;
        }
        case ModelKind::linear: {
            if (cfg.model.latent_x > dim_x || cfg.model.latent_y > dim_y) {
                throw ConfigError("model: linear latent dims cannot exceed the data dimensions");
            }
            out.checkpoint.paired = fit_linear_paired(train.x, train.y, cfg.model.latent_x, cfg.model.latent_y);
            out.log.push_back({"linear", 0, paired_loss(*out.checkpoint.paired, train.x, train.y, tc, false).value});
            break;
        }
        case ModelKind::paired:
        case ModelKind::latent_map: {
            PairedModel model = make_paired_mlp(dim_x, dim_y, cfg.model, init);
            auto res = train_paired(std::move(model), train.x, train.y, tc, logger("paired"));
            record_history("paired", res.history);
            out.checkpoint.paired = std::move(res.model);
            if (cfg.kind == ModelKind::latent_map) {
                LatentMapConfig lc = cfg.latent_map;
                lc.seed = root.derive(streams::latent_map).seed();
                auto lm = train_variational_latent_map(*out.checkpoint.paired, train.x, train.y, lc, logger("latent_map"));
                record_history("latent_map", lm.history);
                out.checkpoint.latent_map = std::move(lm.map);
            }
            break;
        }
        case ModelKind::vpae: {
            VpaeModel model = make_vpae(dim_x, dim_y, cfg.model, init, cfg.sigma);
            auto res = train_vpae(std::move(model), train.x, train.y, tc, logger("vpae"));
            record_history("vpae", res.history);
            out.checkpoint.vpae = std::move(res.model);
            break;
        }
    }
    return out;
}

inline void write_train_log(const fs::path& path, const std::vector<LogRow>& log) {
    CsvWriter w(path);
    w.header({"stage", "epoch", "loss"});
    for (const auto& r : log) {
        w.field(r.stage).field(r.epoch).field(r.loss);
        w.end_row();
    }
    w.close();
}

// ---------------------------------------------------------------------------
// Model queries shared by the commands
// ---------------------------------------------------------------------------

inline std::size_t model_dim_x(const Checkpoint& ck) {
    return ck.vpae ? ck.vpae->vx.data_dim() : ck.paired->dim_x();
}
inline std::size_t model_dim_y(const Checkpoint& ck) {
    return ck.vpae ? ck.vpae->vy.data_dim() : ck.paired->dim_y();
}

inline const MlpNet& x_decoder(const Checkpoint& ck) { return ck.vpae ? ck.vpae->vx.decoder : ck.paired->dec_x; }

// Latent initial guess M_inv(e_y(y)) per row; the variational latent map
// contributes its decoded head mean.
inline Matrix mapped_latents(const Checkpoint& ck, const Matrix& y) {
    if (ck.vpae) {
        const Matrix h = vpae_mapped_heads(*ck.vpae, y);
        return h.leftCols(static_cast<Eigen::Index>(ck.vpae->vx.latent_dim()));
    }
    const Matrix zy = ck.paired->enc_y.forward(y);
    if (ck.latent_map) return latent_map_mean(*ck.latent_map, zy);
    return ck.paired->map_inv.forward(zy);
}

inline Matrix direct_estimates(const Checkpoint& ck, const Matrix& y) {
    return x_decoder(ck).forward(mapped_latents(ck, y));
}

// ---------------------------------------------------------------------------
// Probe data
// ---------------------------------------------------------------------------

struct Probe {
    Matrix y;
    std::optional<Matrix> x;     // ground truth
    std::optional<Matrix> mask;  // 1 = observed
    std::size_t height = 0;
    std::size_t width = 0;
};

inline Matrix limit_rows(const Matrix& m, std::size_t limit) {
    if (limit == 0 || static_cast<std::size_t>(m.rows()) <= limit) return m;
    return m.topRows(static_cast<Eigen::Index>(limit));
}

inline Probe probe_from_pairs(const PairSet& p, std::size_t limit) {
    return {limit_rows(p.y, limit), limit_rows(p.x, limit), limit_rows(p.mask, limit), p.height, p.width};
}

struct ProbeFiles {
    std::string data;
    std::string truth;
    std::string mask;
};

inline Probe probe_from_files(const ProbeFiles& files, std::size_t limit) {
    const ImageSet y = load_idx_images(files.data);
    Probe p;
    p.y = limit_rows(Matrix(y.rows()), limit);
    p.height = y.height();
    p.width = y.width();
    auto companion = [&](const std::string& path, const char* what) -> std::optional<Matrix> {
        if (path.empty()) return std::nullopt;
        const ImageSet img = load_idx_images(path);
        if (img.height() != y.height() || img.width() != y.width() || img.count() != y.count()) {
            throw ConfigError(std::string(what) + " file '" + path + "' does not match the data file's shape");
        }
        return limit_rows(Matrix(img.rows()), limit);
    };
    p.x = companion(files.truth, "truth");
    p.mask = companion(files.mask, "mask");
    if (p.mask) *p.mask = (p.mask->array() > 0.5).cast<double>().matrix();
    return p;
}

inline void check_dims(const Matrix& m, std::size_t expected, const char* what) {
    if (static_cast<std::size_t>(m.cols()) != expected) {
        throw ConfigError(std::string(what) + " has " + std::to_string(m.cols()) + " values per sample, model expects " +
                          std::to_string(expected));
    }
}

inline void write_rows_csv(const fs::path& path, const Matrix& m, const std::string& prefix) {
    CsvWriter w(path);
    std::vector<std::string> names{"index"};
    for (Eigen::Index j = 0; j < m.cols(); ++j) names.push_back(prefix + std::to_string(j));
    w.header(names);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        w.field(static_cast<std::size_t>(i));
        for (Eigen::Index j = 0; j < m.cols(); ++j) w.field(m(i, j));
        w.end_row();
    }
    w.close();
}

inline void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + dir.string() + "': " + ec.message());
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct TrainOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string data;  // IDX images overriding the config's data source
};

inline void cmd_train(const TrainOptions& opt, std::ostream& log) {
    RunConfig cfg = load_config(opt.config);
    if (opt.seed) cfg.seed = *opt.seed;
    if (!opt.data.empty()) {
        cfg.data.source = "idx";
        cfg.data.path = opt.data;
        cfg.validate();
    }
    const DeskData data = build_data(cfg);
    auto outcome = train_model(cfg, data.train);
    ensure_dir(opt.out);
    save_checkpoint(fs::path(opt.out) / "model.pae", outcome.checkpoint);
    write_train_log(fs::path(opt.out) / "train_log.csv", outcome.log);
    log << "trained " << to_string(cfg.kind) << " model on " << data.train.size() << " pairs; final loss "
        << format_double(outcome.log.back().loss) << "\n";
}

struct InvertOptions {
    std::string checkpoint;
    std::string config;  // optional: replaces the lsi section
    std::optional<std::uint64_t> seed;
    std::string out;
    ProbeFiles files;
    bool lsi = false;
    bool cold = false;
    std::optional<double> alpha;
    std::optional<std::size_t> steps;
    std::optional<double> lr;
    std::size_t limit = 0;
    VpaeWarmStart warm_mode = VpaeWarmStart::mapped_mean;
};

inline void cmd_invert(const InvertOptions& opt, std::ostream& log) {
    const Checkpoint ck = load_checkpoint(opt.checkpoint);
    LsiConfig lc = opt.config.empty() ? ck.config.lsi : load_config(opt.config).lsi;
    if (opt.alpha) lc.alpha = *opt.alpha;
    if (opt.steps) lc.steps = *opt.steps;
    if (opt.lr) lc.lr = *opt.lr;
    if (opt.cold) lc.warm_start = false;
    lc.validate();
    const std::uint64_t seed = opt.seed.value_or(ck.config.seed);

    const Probe probe = opt.files.data.empty() ? probe_from_pairs(build_data(ck.config).validation, opt.limit)
                                               : probe_from_files(opt.files, opt.limit);
    check_dims(probe.y, model_dim_y(ck), "data");
    if (probe.x) check_dims(*probe.x, model_dim_x(ck), "truth");
    if (opt.lsi && probe.mask) check_dims(*probe.mask, model_dim_x(ck), "mask");
    if (opt.lsi && !probe.mask && model_dim_x(ck) != model_dim_y(ck)) {
        throw ConfigError("--lsi without a mask needs equal x and y dimensions (identity forward operator)");
    }

    const auto n = probe.y.rows();
    Matrix estimates = direct_estimates(ck, probe.y);
    std::vector<double> final_misfit;
    ensure_dir(opt.out);
    if (opt.lsi) {
        const Matrix z_warm = mapped_latents(ck, probe.y);
        const MlpNet& dec = x_decoder(ck);
        CsvWriter trace(fs::path(opt.out) / "lsi_trace.csv");
        trace.header({"index", "iteration", "misfit", "objective"});
        Rng root(seed);
        for (Eigen::Index i = 0; i < n; ++i) {
            const ForwardOp op = probe.mask ? ForwardOp::mask(probe.mask->row(i).transpose())
                                            : ForwardOp::identity(model_dim_x(ck));
            Vector z0;
            if (!lc.warm_start) {
                z0 = Vector::Zero(static_cast<Eigen::Index>(dec.input_dim()));
            } else if (ck.vpae) {
                Rng r = root.derive(static_cast<std::uint64_t>(i));
                z0 = warm_start(*ck.vpae, probe.y.row(i).transpose(), opt.warm_mode, r);
            } else {
                z0 = z_warm.row(i).transpose();
            }
            const LsiResult res = lsi(dec, op, probe.y.row(i).transpose(), z0, z0, lc);
            estimates.row(i) = res.x_hat.transpose();
            final_misfit.push_back(res.best_misfit);
            for (std::size_t k = 0; k < res.misfit.size(); ++k) {
                trace.field(static_cast<std::size_t>(i)).field(k).field(res.misfit[k]).field(res.objective[k]);
                trace.end_row();
            }
        }
        trace.close();
    }
    write_rows_csv(fs::path(opt.out) / "estimates.csv", estimates, "p");

    if (probe.x || opt.lsi) {
        CsvWriter w(fs::path(opt.out) / "metrics.csv");
        std::vector<std::string> cols{"index"};
        if (probe.x) cols.insert(cols.end(), {"rel_err", "ssim"});
        if (opt.lsi) cols.push_back("misfit");
        w.header(cols);
        double total_rel = 0.0;
        std::size_t counted = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            w.field(static_cast<std::size_t>(i));
            if (probe.x) {
                const Vector xt = probe.x->row(i).transpose(), xe = estimates.row(i).transpose();
                if (xt.norm() > 0.0) {
                    const double re = rel_err(xe, xt);
                    total_rel += re;
                    ++counted;
                    w.field(re);
                } else {
                    w.field(std::string());
                }
                if (probe.height >= 7 && probe.width >= 7) {
                    w.field(ssim(xe, xt, probe.height, probe.width));
                } else {
                    w.field(std::string());
                }
            }
            if (opt.lsi) w.field(final_misfit[static_cast<std::size_t>(i)]);
            w.end_row();
        }
        w.close();
        if (counted) log << "mean rel_err " << format_double(total_rel / static_cast<double>(counted)) << "\n";
    }
    log << (opt.lsi ? "lsi" : "direct") << " estimates for " << n << " samples\n";
}

struct OodOptions {
    std::string checkpoint;
    std::string config;  // accepted for uniformity; unused
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string baseline;  // IDX observations; default: procedural calibration set
    std::string probe;     // IDX observations; default: procedural validation set
    std::string baseline_set = "calibration";  // calibration | train
    std::string probe_set = "ood";             // ood | id
    std::pair<std::size_t, std::size_t> scatter{1, 3};  // one-based metric numbers
    std::size_t limit = 0;
};

inline void cmd_ood(const OodOptions& opt, std::ostream& log) {
    const Checkpoint ck = load_checkpoint(opt.checkpoint);
    if (!ck.paired) throw ConfigError("ood needs a deterministic paired checkpoint (kind paired, linear, identity or latent_map)");
    if (opt.scatter.first < 1 || opt.scatter.first > kNumMetrics || opt.scatter.second < 1 ||
        opt.scatter.second > kNumMetrics) {
        throw ConfigError("--scatter metrics must be in 1..5");
    }
    if (opt.baseline_set != "calibration" && opt.baseline_set != "train") {
        throw ConfigError("--baseline-set must be calibration or train");
    }
    if (opt.probe_set != "ood" && opt.probe_set != "id") throw ConfigError("--probe-set must be ood or id");
    std::optional<DeskData> data;
    auto desk = [&]() -> const DeskData& {
        if (!data) data = build_data(ck.config);
        return *data;
    };
    const Matrix base_y = opt.baseline.empty()
                              ? (opt.baseline_set == "train" ? desk().train.y : desk().calibration.y)
                              : Matrix(load_idx_images(opt.baseline).rows());
    if (static_cast<std::size_t>(base_y.rows()) < kMinBaselineSamples) {
        throw ConfigError("baseline needs at least " + std::to_string(kMinBaselineSamples) + " samples, got " +
                          std::to_string(base_y.rows()));
    }
    check_dims(base_y, ck.paired->dim_y(), "baseline");
    Probe probe;
    if (opt.probe.empty()) {
        probe = probe_from_pairs(opt.probe_set == "id" ? desk().validation : desk().validation_ood, opt.limit);
    } else {
        probe = probe_from_files({opt.probe, "", ""}, opt.limit);
    }
    check_dims(probe.y, ck.paired->dim_y(), "probe");

    const Baseline baseline = fit_baseline(*ck.paired, base_y);
    auto records = recon_metrics(*ck.paired, probe.y);
    if (probe.x) {
        const Matrix est = direct_estimate(*ck.paired, probe.y);
        for (std::size_t i = 0; i < records.size(); ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            const Vector xt = probe.x->row(r).transpose(), xe = est.row(r).transpose();
            if (xt.norm() > 0.0) records[i].rel_err = rel_err(xe, xt);
            if (probe.height >= 7 && probe.width >= 7) records[i].ssim = ssim(xe, xt, probe.height, probe.width);
        }
    }
    ReportOptions ro;
    ro.scatter = {opt.scatter.first - 1, opt.scatter.second - 1};
    export_report(records, baseline, opt.out, ro);
    log << "flag rate " << format_double(flag_rate(baseline, records)) << " over " << records.size() << " probes\n";
}

struct SampleOptions {
    std::string checkpoint;
    std::string config;  // accepted for uniformity; unused
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string data;
    std::size_t n = 100;
    std::size_t limit = 16;
};

inline void cmd_sample(const SampleOptions& opt, std::ostream& log) {
    const Checkpoint ck = load_checkpoint(opt.checkpoint);
    if (!ck.vpae && !ck.latent_map) throw ConfigError("sample needs a vpae or latent_map checkpoint");
    if (opt.n == 0) throw ConfigError("--n must be at least 1");
    const Probe probe = opt.data.empty() ? probe_from_pairs(build_data(ck.config).validation, opt.limit)
                                         : probe_from_files({opt.data, "", ""}, opt.limit);
    check_dims(probe.y, model_dim_y(ck), "data");
    const std::uint64_t seed = opt.seed.value_or(ck.config.seed);
    const auto dim = static_cast<Eigen::Index>(model_dim_x(ck));

    ensure_dir(opt.out);
    const fs::path out(opt.out);
    CsvWriter samples(out / "samples.csv");
    CsvWriter mean(out / "mean.csv");
    std::optional<CsvWriter> stddev;
    if (opt.n >= 2) stddev.emplace(out / "std.csv");
    {
        std::vector<std::string> cols{"probe", "sample"};
        std::vector<std::string> stat_cols{"probe"};
        for (Eigen::Index j = 0; j < dim; ++j) {
            cols.push_back("p" + std::to_string(j));
            stat_cols.push_back("p" + std::to_string(j));
        }
        samples.header(cols);
        mean.header(stat_cols);
        if (stddev) stddev->header(stat_cols);
    }
    const Rng root(seed);
    for (Eigen::Index i = 0; i < probe.y.rows(); ++i) {
        Rng r = root.derive(static_cast<std::uint64_t>(i));
        const Vector y = probe.y.row(i).transpose();
        const Matrix draws = ck.vpae ? vpae_sample_inference(*ck.vpae, y, opt.n, r)
                                     : latent_map_x_samples(*ck.paired, *ck.latent_map, y, opt.n, r);
        for (Eigen::Index s = 0; s < draws.rows(); ++s) {
            samples.field(static_cast<std::size_t>(i)).field(static_cast<std::size_t>(s));
            for (Eigen::Index j = 0; j < dim; ++j) samples.field(draws(s, j));
            samples.end_row();
        }
        Vector mu = draws.row(0).transpose();
        if (opt.n >= 2) {
            const SampleStats st = pixel_stats(draws);
            mu = st.mean;
            stddev->field(static_cast<std::size_t>(i));
            for (Eigen::Index j = 0; j < dim; ++j) stddev->field(st.stddev[j]);
            stddev->end_row();
        }
        mean.field(static_cast<std::size_t>(i));
        for (Eigen::Index j = 0; j < dim; ++j) mean.field(mu[j]);
        mean.end_row();
    }
    samples.close();
    mean.close();
    if (stddev) stddev->close();
    log << opt.n << " samples for each of " << probe.y.rows() << " probes\n";
}

struct ExportOptions {
    std::string checkpoint;
    std::string config;  // accepted for uniformity; unused
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string data;
    std::string labels;
    std::string side = "x";  // x | y
    std::size_t limit = 0;
};

inline void cmd_export_latents(const ExportOptions& opt, std::ostream& log) {
    const Checkpoint ck = load_checkpoint(opt.checkpoint);
    if (opt.side != "x" && opt.side != "y") throw ConfigError("--side must be x or y");
    const bool side_x = opt.side == "x";
    Matrix input;
    if (opt.data.empty()) {
        const DeskData data = build_data(ck.config);
        input = limit_rows(side_x ? data.train.x : data.train.y, opt.limit);
    } else {
        input = limit_rows(Matrix(load_idx_images(opt.data).rows()), opt.limit);
    }
    std::optional<Labels> labels;
    if (!opt.labels.empty()) {
        labels = load_idx_labels(opt.labels);
        if (labels->size() < static_cast<std::size_t>(input.rows())) {
            throw ConfigError("labels file has fewer entries than the data file");
        }
    }
    Matrix z;
    if (ck.vpae) {
        const VariationalAE& v = side_x ? ck.vpae->vx : ck.vpae->vy;
        check_dims(input, v.data_dim(), "data");
        z = v.encoder.forward(input).leftCols(static_cast<Eigen::Index>(v.latent_dim()));
    } else {
        const MlpNet& enc = side_x ? ck.paired->enc_x : ck.paired->enc_y;
        check_dims(input, enc.input_dim(), "data");
        z = enc.forward(input);
    }
    const auto r = side_x ? (ck.vpae ? ck.vpae->vx.latent_dim() : ck.paired->enc_x.output_dim())
                          : (ck.vpae ? ck.vpae->vy.latent_dim() : ck.paired->enc_y.output_dim());
    ensure_dir(opt.out);
    CsvWriter w(fs::path(opt.out) / "latents.csv");
    std::vector<std::string> cols{"index"};
    for (std::size_t j = 0; j < r; ++j) cols.push_back("z" + std::to_string(j + 1));
    if (labels) cols.push_back("label");
    w.header(cols);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        w.field(static_cast<std::size_t>(i));
        for (Eigen::Index j = 0; j < z.cols(); ++j) w.field(z(i, j));
        if (labels) w.field(static_cast<int>((*labels)[static_cast<std::size_t>(i)]));
        w.end_row();
    }
    w.close();
    log << "exported " << z.rows() << " latent vectors of dimension " << r << "\n";
}

}  // namespace pae::cli
