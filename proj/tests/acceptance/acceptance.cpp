#include <unistd.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pae/checkpoint.hpp"
#include "pae/commands.hpp"
#include "pae/datagen.hpp"
#include "pae/inversion.hpp"
#include "pae/linear_pae.hpp"
#include "pae/ood_metrics.hpp"
#include "pae/variational.hpp"

using namespace pae;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch_dir(const std::string& tag) {
    const fs::path d = fs::temp_directory_path() / ("pae_acceptance_" + std::to_string(getpid()) + "_" + tag);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

// Desk benchmark: 16x16 procedural shapes, 2000 train / 320 validation,
// pixel-Bernoulli p = 0.5.
RunConfig desk_config() {
    RunConfig cfg;
    cfg.seed = 1;
    cfg.data.height = cfg.data.width = 16;
    cfg.data.train = 2000;
    cfg.data.validation = 320;
    cfg.data.calibration = 320;
    cfg.corruption.kind = CorruptionSpec::Kind::pixel_bernoulli;
    cfg.corruption.p = 0.5;
    cfg.ood_corruption.kind = CorruptionSpec::Kind::blocks;
    cfg.ood_corruption.count = 5;
    cfg.ood_corruption.size = 8;
    cfg.train.epochs = 50;
    cfg.validate(false);
    return cfg;
}

// ---------------------------------------------------------------------------

Outcome linear_ae_optimality() {
    Rng rng(101);
    double worst_err = 0.0, worst_norm = 0.0;
    std::size_t perturb_wins = 0, checks = 0;
    for (int inst = 0; inst < 100; ++inst) {
        const auto n = static_cast<Eigen::Index>(1 + rng.uniform_index(24));
        const Matrix a = gaussian_matrix(rng, n, n);
        const SecondMoment sm = second_moment_from_gamma(a * a.transpose());
        const Vector s = svd(sm.factor).s;
        const double total = s.squaredNorm();
        for (Eigen::Index r = 1; r <= n; ++r) {
            const LinearAE ae = fit_linear_ae(sm, static_cast<std::size_t>(r));
            const Matrix composite = ae.composite();
            const double err = linear_ae_error(composite, sm.factor);
            const double tail = s.tail(n - r).squaredNorm();
            worst_err = std::max(worst_err, std::abs(err - tail) / std::max(tail, 1e-6 * total));
            worst_norm = std::max(worst_norm, std::abs(composite.norm() - std::sqrt(static_cast<double>(r))));
            const double dist = (composite * sm.factor - sm.factor).norm();
            for (int k = 0; k < 50; ++k) {
                Matrix e, d;
                if (k % 2 == 0) {
                    const double scale = std::pow(10.0, -4.0 + 4.0 * rng.uniform());
                    e = ae.encoder + scale * gaussian_matrix(rng, r, n);
                    d = ae.decoder + scale * gaussian_matrix(rng, n, r);
                } else {
                    e = gaussian_matrix(rng, r, n);
                    d = gaussian_matrix(rng, n, r);
                }
                const double other = (d * e * sm.factor - sm.factor).norm();
                if (other < dist * (1.0 - 1e-12) - 1e-12) ++perturb_wins;
                ++checks;
            }
        }
    }
    Outcome o;
    o.pass = worst_err <= 1e-9 && worst_norm <= 1e-10 && perturb_wins == 0;
    o.detail = "max rel err " + fmt("%.2e", worst_err) + ", max | |A|_F - sqrt(r) | " + fmt("%.2e", worst_norm) +
               ", perturbations beating optimum " + std::to_string(perturb_wins) + "/" + std::to_string(checks);
    return o;
}

Outcome latent_map_closed_forms() {
    Rng rng(202);
    double worst_fwd = 0.0, worst_inv = 0.0, worst_se = 0.0;
    std::size_t max_samples = 0;
    for (int inst = 0; inst < 50; ++inst) {
        const auto n = static_cast<Eigen::Index>(2 + rng.uniform_index(5));
        const auto m = static_cast<Eigen::Index>(2 + rng.uniform_index(5));
        const auto rx = static_cast<Eigen::Index>(1 + rng.uniform_index(static_cast<std::size_t>(n)));
        const auto ry = static_cast<Eigen::Index>(1 + rng.uniform_index(static_cast<std::size_t>(m)));
        const Matrix f = gaussian_matrix(rng, m, n);
        const Matrix ex = gaussian_matrix(rng, rx, n), ey = gaussian_matrix(rng, ry, m);

        // Forward map against least squares on an empirical second moment.
        const Matrix xs = gaussian_matrix(rng, 2000, n) * gaussian_matrix(rng, n, n);
        const SecondMoment emp = second_moment_factor(xs, 0.0);
        const Matrix fwd = optimal_forward_map(ex, ey, f, emp);
        const Matrix in = xs * ex.transpose(), out = xs * f.transpose() * ey.transpose();
        const Matrix fwd_ls = in.colPivHouseholderQr().solve(out).transpose();
        worst_fwd = std::max(worst_fwd, (fwd - fwd_ls).norm() / std::max(fwd_ls.norm(), 1e-300));

        // Inverse map against regression of x-latents on noisy y-latents,
        // streamed until the regression's own standard error is small.
        const Matrix lx = gaussian_matrix(rng, n, n);
        const SecondMoment sm = second_moment_from_gamma(lx * lx.transpose());
        const Matrix le = (0.2 + 0.8 * rng.uniform()) * gaussian_matrix(rng, m, m);
        const Matrix inv = optimal_inverse_map(ex, ey, f, sm, le * le.transpose());
        Matrix gram = Matrix::Zero(ry, ry), cross = Matrix::Zero(ry, rx);
        double zx_sq = 0.0, se_rel = 0.0;
        Matrix inv_mc;
        std::size_t count = 0;
        const Eigen::Index chunk = 100000;
        do {
            const Matrix x = gaussian_matrix(rng, chunk, n) * lx.transpose();
            const Matrix y = x * f.transpose() + gaussian_matrix(rng, chunk, m) * le.transpose();
            const Matrix zy = y * ey.transpose(), zx = x * ex.transpose();
            gram += zy.transpose() * zy;
            cross += zy.transpose() * zx;
            zx_sq += zx.squaredNorm();
            count += static_cast<std::size_t>(chunk);
            const Eigen::LDLT<Matrix> ldlt(gram);
            const Matrix coef = ldlt.solve(cross);
            inv_mc = coef.transpose();
            const double rss = std::max(0.0, zx_sq - (cross.transpose() * coef).trace());
            const double trace_inv = ldlt.solve(Matrix::Identity(ry, ry)).trace();
            se_rel = std::sqrt(rss / static_cast<double>(count) * trace_inv) / std::max(inv_mc.norm(), 1e-300);
        } while (se_rel > 2e-3 && count < 40000000);
        max_samples = std::max(max_samples, count);
        worst_se = std::max(worst_se, se_rel);
        worst_inv = std::max(worst_inv, (inv - inv_mc).norm() / std::max(inv.norm(), 1e-300));
    }
    Outcome o;
    o.pass = worst_fwd <= 1e-6 && worst_inv <= 1e-2;
    o.detail = "forward max rel diff " + fmt("%.2e", worst_fwd) + " (<= 1e-6), inverse max rel diff " +
               fmt("%.2e", worst_inv) + " (<= 1e-2; oracle rel std error <= " + fmt("%.1e", worst_se) +
               ", up to " + std::to_string(max_samples) + " samples)";
    return o;
}

template <typename Loss, typename Grad>
double fd_gap(Loss&& loss, Grad&& grad, const Vector& p0) {
    return relative_difference(grad(), finite_diff_grad(loss, p0, 1e-6));
}

Outcome gradient_fidelity() {
    Rng rng(303);
    std::array<double, 4> worst{};
    ModelSpec spec;
    spec.latent_x = 3;
    spec.latent_y = 2;
    spec.hidden = {5};
    spec.activation = Activation::silu;
    spec.output = Activation::sigmoid;
    const std::array<LossVariant, 3> variants{LossVariant::combined, LossVariant::full_mappings,
                                              LossVariant::latent_mappings};
    const std::array<MapKind, 2> maps{MapKind::linear, MapKind::mlp};
    for (int probe = 0; probe < 100; ++probe) {
        {
            ModelSpec s = spec;
            s.map_kind = maps[static_cast<std::size_t>(probe) % maps.size()];
            s.map_hidden = {4};
            PairedModel m = make_paired_mlp(5, 4, s, rng);
            const Matrix x = gaussian_matrix(rng, 6, 5), y = gaussian_matrix(rng, 6, 4);
            TrainConfig c;
            c.variant = variants[static_cast<std::size_t>(probe) % variants.size()];
            c.alpha_x = 0.5 + rng.uniform();
            c.alpha_y = 0.5 + rng.uniform();
            c.alpha_m = 0.5 + rng.uniform();
            c.alpha_m_inv = 0.5 + rng.uniform();
            PairedModel pm = m;
            worst[0] = std::max(worst[0], fd_gap(
                                              [&](const Vector& p) {
                                                  pm.set_params(p);
                                                  return paired_loss(pm, x, y, c, false).value;
                                              },
                                              [&] { return paired_loss(m, x, y, c).grad; }, m.params()));
        }
        {
            VariationalAE vae{MlpNet::dense({5, 6, 6}, Activation::silu, Activation::identity, rng),
                              MlpNet::dense({3, 6, 5}, Activation::silu, Activation::sigmoid, rng),
                              0.5 + rng.uniform()};
            const Matrix x = gaussian_matrix(rng, 4, 5), eps = gaussian_matrix(rng, 4, 3);
            const auto ne = static_cast<Eigen::Index>(vae.encoder.num_params());
            Vector p0(ne + static_cast<Eigen::Index>(vae.decoder.num_params()));
            p0 << vae.encoder.params(), vae.decoder.params();
            VariationalAE pv = vae;
            worst[1] = std::max(worst[1], fd_gap(
                                              [&](const Vector& p) {
                                                  pv.encoder.set_params(p.head(ne));
                                                  pv.decoder.set_params(p.tail(p.size() - ne));
                                                  return elbo_loss(pv, x, eps, false).value;
                                              },
                                              [&] { return elbo_loss(vae, x, eps).grad; }, p0));
        }
        {
            VpaeModel m = make_vpae(5, 4, spec, rng, 0.5 + rng.uniform());
            const Matrix x = gaussian_matrix(rng, 5, 5), y = gaussian_matrix(rng, 5, 4);
            const VpaeNoise noise = VpaeNoise::sample(rng, 5, 3, 2);
            VpaeModel pm = m;
            worst[2] = std::max(worst[2], fd_gap(
                                              [&](const Vector& p) {
                                                  pm.set_params(p);
                                                  return vpae_loss(pm, x, y, noise, kAllVpaeTerms, false).value;
                                              },
                                              [&] { return vpae_loss(m, x, y, noise).grad; }, m.params()));
        }
        {
            const MlpNet dec = MlpNet::dense({3, 8, 12}, Activation::silu, Activation::sigmoid, rng);
            const ForwardOp op = probe % 3 == 0   ? ForwardOp::blur(3, 4, gaussian_kernel(3, 1.0), gaussian_vector(rng, 3))
                                 : probe % 3 == 1 ? ForwardOp::dense(gaussian_matrix(rng, 7, 12))
                                                  : ForwardOp::mask((gaussian_vector(rng, 12).array() > 0.0).cast<double>());
            const Vector y = gaussian_vector(rng, static_cast<Eigen::Index>(op.output_dim()));
            const Vector z = gaussian_vector(rng, 3), z0 = gaussian_vector(rng, 3);
            const double alpha = probe % 4 == 0 ? 0.0 : rng.uniform();
            worst[3] = std::max(worst[3], fd_gap(
                                              [&](const Vector& v) {
                                                  return lsi_objective(dec, op, y, v, z0, alpha, false).value;
                                              },
                                              [&] { return lsi_objective(dec, op, y, z, z0, alpha).grad; }, z));
        }
    }
    Outcome o;
    o.pass = *std::max_element(worst.begin(), worst.end()) < 1e-5;
    o.detail = "max rel err paired " + fmt("%.2e", worst[0]) + ", elbo " + fmt("%.2e", worst[1]) + ", vpae " +
               fmt("%.2e", worst[2]) + ", lsi " + fmt("%.2e", worst[3]) + " (100 probes each)";
    return o;
}

Outcome kl_monte_carlo() {
    Rng rng(404);
    double worst = 0.0;
    for (int g_idx = 0; g_idx < 20; ++g_idx) {
        const auto d = static_cast<Eigen::Index>(1 + rng.uniform_index(6));
        const GaussianLatent g{gaussian_vector(rng, d, 1.0), gaussian_vector(rng, d, 0.5)};
        const Vector var = (2.0 * g.log_std.array()).exp();
        const int n = 1000000;
        double sum = 0.0, sq = 0.0;
        for (int i = 0; i < n; ++i) {
            const Vector z = reparameterize(g, rng);
            const double log_ratio =
                (-g.log_std.array() - (z - g.mu).array().square() / (2.0 * var.array()) + z.array().square() / 2.0)
                    .sum();
            sum += log_ratio;
            sq += log_ratio * log_ratio;
        }
        const double mean = sum / n;
        const double se = std::sqrt((sq / n - mean * mean) / n);
        worst = std::max(worst, std::abs(mean - kl_std_normal(g)) / se);
    }
    Outcome o;
    o.pass = worst <= 3.0;
    o.detail = "max |MC - closed form| = " + fmt("%.2f", worst) + " standard errors over 20 Gaussians";
    return o;
}

Outcome error_bound() {
    Rng rng(505);
    std::size_t violations = 0;
    double tightest = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = static_cast<Eigen::Index>(2 + rng.uniform_index(9));
        const auto m = static_cast<Eigen::Index>(2 + rng.uniform_index(9));
        const auto rx = static_cast<Eigen::Index>(1 + rng.uniform_index(static_cast<std::size_t>(n)));
        const auto ry = static_cast<Eigen::Index>(1 + rng.uniform_index(static_cast<std::size_t>(m)));
        LinearAE ax{gaussian_matrix(rng, rx, n), gaussian_matrix(rng, n, rx)};
        LinearAE ay{gaussian_matrix(rng, ry, m), gaussian_matrix(rng, m, ry)};
        const PairedModel model =
            make_linear_paired(ax, ay, {gaussian_matrix(rng, ry, rx), gaussian_matrix(rng, rx, ry)});
        const Matrix mp = model.map.as_matrix(), mi = model.map_inv.as_matrix();
        const Matrix x = gaussian_matrix(rng, 32, n);
        const Matrix y = x * ax.encoder.transpose() * mp.transpose() * ay.decoder.transpose();
        const Matrix y_obs = y + rng.uniform() * gaussian_matrix(rng, 32, m);
        const double delta = (y_obs - y).rowwise().norm().maxCoeff();
        const ErrorBoundReport r = linear_error_bound(model, x, y, delta);
        const Matrix x_hat = y_obs * ay.encoder.transpose() * mi.transpose() * ax.decoder.transpose();
        const double worst = (x_hat - x).rowwise().norm().maxCoeff();
        if (worst > r.bound * (1.0 + 1e-10) + 1e-12) ++violations;
        if (r.bound > 0.0) tightest = std::max(tightest, worst / r.bound);
    }
    Outcome o;
    o.pass = violations == 0;
    o.detail = std::to_string(violations) + " violations in 1000 models; max observed/bound " + fmt("%.3f", tightest);
    return o;
}

// ---------------------------------------------------------------------------

Outcome desk_inpainting(PairedModel& trained) {
    const RunConfig cfg = desk_config();
    const auto data = cli::build_data(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = cli::train_model(cfg, data.train);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    trained = *out.checkpoint.paired;
    const Matrix x_hat = direct_estimate(trained, data.validation.y);
    const auto size = static_cast<double>(x_hat.size());
    const double mse_hat = (x_hat - data.validation.x).squaredNorm() / size;
    const double mse_y = (data.validation.y - data.validation.x).squaredNorm() / size;
    const double first = out.log.front().loss, last = out.log.back().loss;
    Outcome o;
    o.pass = mse_hat < mse_y && last < 0.5 * first && secs < 600.0;
    o.detail = "mse(x_hat,x) " + fmt("%.4f", mse_hat) + " vs mse(y,x) " + fmt("%.4f", mse_y) + "; loss " +
               fmt("%.4f", first) + " -> " + fmt("%.4f", last) + "; training " + fmt("%.0f", secs) + " s";
    return o;
}

Outcome ood_separation() {
    RunConfig cfg = desk_config();
    cfg.train.variant = LossVariant::latent_mappings;
    const auto data = cli::build_data(cfg);
    const auto out = cli::train_model(cfg, data.train);
    const PairedModel& m = *out.checkpoint.paired;
    const auto id = recon_metrics(m, data.validation.y);
    const auto ood = recon_metrics(m, data.validation_ood.y);
    double best_auc = 0.0;
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < kNumMetrics; ++k) {
        const double a = auc(metric_column(id, k), metric_column(ood, k));
        if (a > best_auc) {
            best_auc = a;
            best_k = k;
        }
    }
    const Baseline baseline = fit_baseline(m, data.calibration.y);
    const double id_rate = flag_rate(baseline, id), ood_rate = flag_rate(baseline, ood);
    Outcome o;
    o.pass = best_auc >= 0.8 && id_rate <= 0.05 && ood_rate >= 0.5;
    o.detail = "best AUC " + fmt("%.3f", best_auc) + " (" + metric_name(best_k) + "); ID flag rate " +
               fmt("%.3f", id_rate) + " (<= 0.05); OOD flag rate " + fmt("%.3f", ood_rate) + " (>= 0.5)";
    return o;
}

Outcome lsi_benchmark() {
    RunConfig cfg = desk_config();
    cfg.corruption.snr_db = 30.0;
    const auto data = cli::build_data(cfg);
    const auto out = cli::train_model(cfg, data.train);
    const PairedModel& m = *out.checkpoint.paired;
    LsiConfig lc;
    lc.steps = 200;
    lc.lr = 1e-2;
    lc.alpha = 0.0;
    const Matrix xs = data.validation.x.topRows(32), masks = data.validation.mask.topRows(32);
    std::size_t settled = 0, warm_wins = 0;
    std::map<double, double> mean_rel;
    for (double snr : {0.0, 10.0, 30.0, 70.0}) {
        Rng rng(99);
        double total = 0.0;
        for (Eigen::Index i = 0; i < 32; ++i) {
            const Vector xt = xs.row(i).transpose();
            const Vector clean = xt.cwiseProduct(masks.row(i).transpose());
            const Vector y = add_noise_snr(clean, snr, rng);
            const ForwardOp op = ForwardOp::mask(masks.row(i).transpose());
            lc.warm_start = true;
            const LsiResult warm = lsi(m, op, y, lc);
            total += rel_err(warm.x_hat, xt);
            if (snr == 30.0) {
                lc.warm_start = false;
                const LsiResult cold = lsi(m, op, y, lc);
                settled += warm.best_misfit <= warm.misfit.front();
                warm_wins += warm.best_misfit < cold.best_misfit;
            }
        }
        mean_rel[snr] = total / 32.0;
    }
    double worst_ratio = 0.0;
    for (const auto& [snr, v] : mean_rel) worst_ratio = std::max(worst_ratio, v / mean_rel[30.0]);
    Outcome o;
    o.pass = settled == 32 && warm_wins >= 24 && worst_ratio <= 2.0;
    o.detail = "final <= warm-start misfit " + std::to_string(settled) + "/32; warm beats cold " +
               std::to_string(warm_wins) + "/32; mean rel_err at 0/10/30/70 dB " + fmt("%.4f", mean_rel[0.0]) + "/" +
               fmt("%.4f", mean_rel[10.0]) + "/" + fmt("%.4f", mean_rel[30.0]) + "/" + fmt("%.4f", mean_rel[70.0]) +
               ", worst ratio to 30 dB " + fmt("%.2f", worst_ratio);
    return o;
}

Outcome vpae_sampling(const PairedModel& paired) {
    RunConfig cfg = desk_config();
    cfg.kind = ModelKind::vpae;
    cfg.sigma = 1.0;
    const auto data = cli::build_data(cfg);
    const auto out = cli::train_model(cfg, data.train);
    const VpaeModel& v = *out.checkpoint.vpae;
    double total_r = 0.0;
    Rng root(7);
    for (Eigen::Index i = 0; i < 32; ++i) {
        Rng r = root.derive(static_cast<std::uint64_t>(i));
        const Vector y = data.validation.y.row(i).transpose(), x = data.validation.x.row(i).transpose();
        const SampleStats st = pixel_stats(vpae_sample_inference(v, y, 100, r));
        total_r += pearson(st.stddev, (st.mean - x).cwiseAbs());
    }
    const double mean_r = total_r / 32.0;

    const VpaeModel degenerate = vpae_from_paired(paired);
    const Matrix y = data.validation.y.topRows(32);
    double gap = (vpae_direct_estimate(degenerate, y) - direct_estimate(paired, y)).cwiseAbs().maxCoeff();
    Rng r(8);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const Vector yi = y.row(i).transpose();
        const Matrix draws = vpae_sample_inference(degenerate, yi, 100, r);
        const Vector det = direct_estimate(paired, yi);
        gap = std::max(gap, (draws.rowwise() - det.transpose()).cwiseAbs().maxCoeff());
    }
    Outcome o;
    o.pass = mean_r > 0.2 && gap <= 1e-6;
    o.detail = "mean Pearson r(std, |error|) " + fmt("%.3f", mean_r) + " over 32 probes; degenerate vs paired max gap " +
               fmt("%.2e", gap);
    return o;
}

// ---------------------------------------------------------------------------

std::string fixture(const std::string& name) { return std::string(PAE_FIXTURE_DIR) + "/" + name; }

int run_cli(const std::string& args) {
    const std::string cmd = std::string(PAE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> dir_bytes(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
    }
    return out;
}

template <typename F>
bool throws(F&& f) {
    try {
        f();
    } catch (const std::exception&) {
        return true;
    }
    return false;
}

Outcome infrastructure() {
    std::vector<std::string> failures;

    {
        const auto bytes = read_file_bytes(fixture("images_1x2x2.idx"));
        const ImageSet img = load_idx_images(fixture("images_1x2x2.idx"));
        const bool ok = img.count() == 1 && img.at(0, 0, 0) == 0.0 && img.at(0, 0, 1) == 1.0 &&
                        img.at(0, 1, 0) == 128.0 / 255.0 && img.at(0, 1, 1) == 64.0 / 255.0 &&
                        encode_idx(img) == bytes;
        const ImageSet rect = load_idx_images(fixture("images_2x3x2.idx"));
        const bool rect_ok = rect.height() == 3 && rect.width() == 2 && rect.at(1, 2, 1) == 220.0 / 255.0 &&
                             encode_idx(rect) == read_file_bytes(fixture("images_2x3x2.idx"));
        const Labels labels = load_idx_labels(fixture("labels_3.idx"));
        const bool labels_ok = labels == Labels{7, 0, 255} && encode_idx(labels) == read_file_bytes(fixture("labels_3.idx"));
        const bool empty_ok = load_idx_images(fixture("images_0x4x4.idx")).count() == 0;
        const bool errors_ok = throws([] { load_idx_images(fixture("truncated_payload.idx")); }) &&
                               throws([] { load_idx_images(fixture("bad_magic.idx")); });
        if (!(ok && rect_ok && labels_ok && empty_ok && errors_ok)) failures.emplace_back("idx fixtures");
    }

    const fs::path dir = scratch_dir("infra");
    {
        std::ofstream(dir / "cfg.json") << R"({
  "seed": 21,
  "data": {"height": 8, "width": 8, "train": 64, "validation": 8, "calibration": 40},
  "ood_corruption": {"kind": "blocks", "count": 2, "size": 3},
  "model": {"kind": "paired", "latent_x": 4, "latent_y": 4, "hidden": [16]},
  "train": {"epochs": 3, "batch_size": 16},
  "lsi": {"steps": 20}
})";
        std::ofstream(dir / "vcfg.json") << R"({
  "seed": 22,
  "data": {"height": 8, "width": 8, "train": 64, "validation": 4, "calibration": 8},
  "model": {"kind": "vpae", "latent_x": 3, "latent_y": 3, "hidden": [16]},
  "train": {"epochs": 2, "batch_size": 16}
})";
        const std::string d = dir.string();
        bool cli_ok = true;
        for (const char* run : {"a", "b"}) {
            const std::string o = d + "/" + run;
            cli_ok &= run_cli("train --config " + d + "/cfg.json --out " + o + "/train") == 0;
            cli_ok &= run_cli("train --config " + d + "/vcfg.json --out " + o + "/vtrain") == 0;
            const std::string ck = o + "/train/model.pae", vck = o + "/vtrain/model.pae";
            cli_ok &= run_cli("invert --checkpoint " + ck + " --out " + o + "/direct --direct") == 0;
            cli_ok &= run_cli("invert --checkpoint " + ck + " --out " + o + "/lsi --lsi") == 0;
            cli_ok &= run_cli("invert --checkpoint " + vck + " --out " + o + "/vlsi --lsi --warm-mode sample") == 0;
            cli_ok &= run_cli("ood --checkpoint " + ck + " --out " + o + "/ood") == 0;
            cli_ok &= run_cli("sample --checkpoint " + vck + " --out " + o + "/sample --n 20 --limit 3") == 0;
            cli_ok &= run_cli("export-latents --checkpoint " + ck + " --out " + o + "/latents") == 0;
        }
        const auto a = dir_bytes(dir / "a"), b = dir_bytes(dir / "b");
        if (!cli_ok) failures.emplace_back("cli exit codes");
        if (a.empty() || a != b) failures.emplace_back("cli determinism");

        bool round_trip = true;
        for (const char* name : {"a/train/model.pae", "a/vtrain/model.pae"}) {
            const fs::path p = dir / name;
            if (!fs::exists(p)) {
                round_trip = false;
                continue;
            }
            const fs::path again = dir / "again.pae";
            save_checkpoint(again, load_checkpoint(p));
            round_trip &= slurp(again) == slurp(p);
        }
        if (!round_trip) failures.emplace_back("checkpoint round trip");
    }
    fs::remove_all(dir);

    double worst_db = 0.0;
    Rng rng(606);
    for (int i = 0; i < 200; ++i) {
        const Vector s = gaussian_vector(rng, static_cast<Eigen::Index>(16 + rng.uniform_index(800)));
        const double target = -20.0 + 100.0 * rng.uniform();
        worst_db = std::max(worst_db, std::abs(snr_db(s, add_noise_snr(s, target, rng)) - target));
    }
    if (worst_db > 1e-9) failures.emplace_back("snr calibration");

    Outcome o;
    o.pass = failures.empty();
    o.detail = "idx fixtures, checkpoint round trip, cli determinism over 5 commands, snr max error " +
               fmt("%.1e", worst_db) + " dB";
    for (const auto& f : failures) o.detail += "; FAILED " + f;
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    std::setvbuf(stdout, nullptr, _IONBF, 0);
    PairedModel desk_model = PairedModel::identity(1);
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"linear autoencoder optimality", linear_ae_optimality},
        {"optimal latent map closed forms", latent_map_closed_forms},
        {"gradient fidelity", gradient_fidelity},
        {"KL closed form vs Monte Carlo", kl_monte_carlo},
        {"linear error bound", error_bound},
        {"desk inpainting benchmark", [&] { return desk_inpainting(desk_model); }},
        {"OOD separation", ood_separation},
        {"LSI with mask operator", lsi_benchmark},
        {"VPAE sampling", [&] { return vpae_sampling(desk_model); }},
        {"infrastructure", infrastructure},
    };
    constexpr double kNone = std::numeric_limits<double>::infinity();
    const std::array<double, 10> time_limits{30, 60, 300, kNone, kNone, kNone, kNone, kNone, kNone, kNone};
    std::vector<std::string> only(argv + 1, argv + argc);
    int failed = 0;
    std::size_t ran = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const std::string id = "C" + std::to_string(i + 1);
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        ++ran;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs > time_limits[i]) {
            o.pass = false;
            o.detail += "; exceeded " + fmt("%.0f", time_limits[i]) + " s";
        }
        if (!o.pass) ++failed;
        std::printf("%s %s %s: %s [%.1f s]\n", id.c_str(), o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                    o.detail.c_str(), secs);
    }
    std::printf("%d of %zu criteria failed\n", failed, ran);
    return failed == 0 ? 0 : 1;
}
