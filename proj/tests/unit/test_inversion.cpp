#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "pae/inversion.hpp"
#include "pae/linear_pae.hpp"

using namespace pae;

namespace {

double dot_test_gap(const ForwardOp& op, Rng& rng) {
    const Vector x = gaussian_vector(rng, static_cast<Eigen::Index>(op.input_dim()));
    const Vector r = gaussian_vector(rng, static_cast<Eigen::Index>(op.output_dim()));
    const double lhs = op.apply(x).dot(r), rhs = x.dot(op.adjoint(r));
    return std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs));
}

// Zero-padded 2-D correlation with the outer product of the two kernels.
Vector blur_oracle(const Vector& x, std::size_t h, std::size_t w, const Vector& kv, const Vector& kh) {
    const auto cv = kv.size() / 2, ch = kh.size() / 2;
    Vector out = Vector::Zero(x.size());
    for (long i = 0; i < static_cast<long>(h); ++i) {
        for (long j = 0; j < static_cast<long>(w); ++j) {
            double acc = 0.0;
            for (long a = 0; a < kv.size(); ++a) {
                for (long b = 0; b < kh.size(); ++b) {
                    const long si = i + a - cv, sj = j + b - ch;
                    if (si < 0 || sj < 0 || si >= static_cast<long>(h) || sj >= static_cast<long>(w)) continue;
                    acc += kv[a] * kh[b] * x[si * static_cast<long>(w) + sj];
                }
            }
            out[i * static_cast<long>(w) + j] = acc;
        }
    }
    return out;
}

MlpNet smooth_decoder(Rng& rng, std::size_t r, std::size_t n) {
    return MlpNet::dense({r, 8, n}, Activation::silu, Activation::sigmoid, rng);
}

}  // namespace

TEST(ForwardOp, IdentityMask) {
    Rng rng(1);
    const ForwardOp op = ForwardOp::identity(7);
    const Vector x = gaussian_vector(rng, 7);
    EXPECT_EQ(op.apply(x), x);
    EXPECT_EQ(op.adjoint(x), x);
}

TEST(ForwardOp, MaskZerosExactlyTheMaskedPixels) {
    Rng rng(2);
    Vector keep = Vector::Ones(20);
    for (int i : {1, 4, 9, 15}) keep[i] = 0.0;
    const ForwardOp op = ForwardOp::mask(keep);
    const Vector x = gaussian_vector(rng, 20).array().abs() + 0.1;
    const Vector y = op.apply(x);
    EXPECT_EQ((y.array() == 0.0).count(), 4);
    for (int i : {1, 4, 9, 15}) EXPECT_EQ(y[i], 0.0);
    Vector bad = keep;
    bad[0] = 0.5;
    EXPECT_THROW(ForwardOp::mask(bad), std::invalid_argument);
    EXPECT_THROW(op.apply(Vector::Zero(19)), std::invalid_argument);
}

TEST(ForwardOp, DotTests) {
    Rng rng(3);
    Vector keep(30);
    for (Eigen::Index i = 0; i < keep.size(); ++i) keep[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const std::vector<ForwardOp> ops{ForwardOp::mask(keep), ForwardOp::dense(gaussian_matrix(rng, 12, 30)),
                                     ForwardOp::blur(5, 6, gaussian_vector(rng, 3), gaussian_vector(rng, 5)),
                                     ForwardOp::blur(6, 5, gaussian_kernel(7, 1.5), gaussian_kernel(1, 1.0))};
    for (const ForwardOp& op : ops) {
        for (int probe = 0; probe < 100; ++probe) EXPECT_LE(dot_test_gap(op, rng), 1e-10);
    }
}

TEST(ForwardOp, BlurMatchesDirectConvolution) {
    Rng rng(4);
    const Vector kv = gaussian_vector(rng, 5), kh = gaussian_vector(rng, 3);
    const ForwardOp op = ForwardOp::blur(7, 4, kv, kh);
    const Vector x = gaussian_vector(rng, 28);
    EXPECT_LE((op.apply(x) - blur_oracle(x, 7, 4, kv, kh)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((op.to_matrix().transpose() * x - op.adjoint(x)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_THROW(ForwardOp::blur(3, 3, Vector::Ones(2), Vector::Ones(3)), std::invalid_argument);
}

TEST(ForwardOp, GaussianKernel) {
    const Vector k = gaussian_kernel(5, 1.0);
    EXPECT_NEAR(k.sum(), 1.0, 1e-15);
    EXPECT_NEAR(k[0], k[4], 1e-16);
    EXPECT_NEAR(k[1] / k[2], std::exp(-0.5), 1e-14);
    EXPECT_THROW(gaussian_kernel(4, 1.0), std::invalid_argument);
    EXPECT_THROW(gaussian_kernel(3, 0.0), std::invalid_argument);
}

TEST(WarmStart, IdentityModel) {
    Rng rng(5);
    const Vector y = gaussian_vector(rng, 6);
    EXPECT_EQ(warm_start(PairedModel::identity(6), y), y);
}

TEST(WarmStart, LinearModelMatchesMatrixArithmetic) {
    Rng rng(6);
    const Matrix ex = gaussian_matrix(rng, 3, 6), ey = gaussian_matrix(rng, 2, 5), mi = gaussian_matrix(rng, 3, 2);
    const PairedModel m = make_linear_paired({ex, gaussian_matrix(rng, 6, 3)}, {ey, gaussian_matrix(rng, 5, 2)},
                                             {gaussian_matrix(rng, 2, 3), mi});
    const Vector y = gaussian_vector(rng, 5);
    EXPECT_LE((warm_start(m, y) - mi * ey * y).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_EQ(warm_start(m, y), warm_start(m, y));
}

TEST(WarmStart, VpaeModes) {
    Rng rng(7);
    ModelSpec spec;
    spec.latent_x = spec.latent_y = 3;
    spec.hidden = {6};
    const PairedModel paired = make_paired_mlp(5, 4, spec, rng);
    const VpaeModel degenerate = vpae_from_paired(paired);
    const Vector y = gaussian_vector(rng, 4);
    const Vector mean = warm_start(degenerate, y, VpaeWarmStart::mapped_mean, rng);
    EXPECT_LE((mean - warm_start(paired, y)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((warm_start(degenerate, y, VpaeWarmStart::sample, rng) - mean).cwiseAbs().maxCoeff(), 1e-12);

    const VpaeModel noisy = vpae_from_paired(paired, std::log(0.5));
    Rng a(3), b(3);
    const Vector s1 = warm_start(noisy, y, VpaeWarmStart::sample_mean, a, 4000);
    EXPECT_EQ(s1, warm_start(noisy, y, VpaeWarmStart::sample_mean, b, 4000));
    EXPECT_LE((s1 - mean).cwiseAbs().maxCoeff(), 4.0 * 0.5 / std::sqrt(4000.0) * 3.0);
    EXPECT_THROW(warm_start(noisy, y, VpaeWarmStart::sample_mean, a, 0), std::invalid_argument);
}

TEST(LsiObjective, GradientMatchesFiniteDifferences) {
    Rng rng(8);
    for (int probe = 0; probe < 30; ++probe) {
        const MlpNet dec = smooth_decoder(rng, 3, 12);
        const ForwardOp op = probe % 2 == 0 ? ForwardOp::blur(3, 4, gaussian_kernel(3, 1.0), gaussian_vector(rng, 3))
                                            : ForwardOp::dense(gaussian_matrix(rng, 7, 12));
        const Vector y = gaussian_vector(rng, static_cast<Eigen::Index>(op.output_dim()));
        const Vector z = gaussian_vector(rng, 3), z0 = gaussian_vector(rng, 3);
        const double alpha = probe % 3 == 0 ? 0.0 : rng.uniform();
        const Vector g = lsi_objective(dec, op, y, z, z0, alpha).grad;
        const Vector fd = finite_diff_grad(
            [&](const Vector& v) { return lsi_objective(dec, op, y, v, z0, alpha, false).value; }, z, 1e-6);
        EXPECT_LT(relative_difference(g, fd), 1e-5);
    }
}

TEST(Lsi, HugeAlphaPinsToReference) {
    Rng rng(9);
    const MlpNet dec = smooth_decoder(rng, 4, 10);
    const Vector z0 = gaussian_vector(rng, 4), y = gaussian_vector(rng, 10);
    LsiConfig cfg;
    cfg.alpha = 1e9;
    cfg.steps = 100;
    const LsiResult r = lsi(dec, ForwardOp::identity(10), y, z0, z0, cfg);
    EXPECT_LE((r.z_star - z0).norm(), 1e-3 * z0.norm());
}

TEST(Lsi, IdentityConvexCaseConverges) {
    Rng rng(10);
    const Vector y = gaussian_vector(rng, 8);
    LsiConfig cfg;
    cfg.steps = 3000;
    cfg.warm_start = false;
    const LsiResult r = lsi(PairedModel::identity(8), ForwardOp::identity(8), y, cfg);
    EXPECT_LE(r.best_misfit, 1e-6);
    EXPECT_LE((r.x_hat - y).norm(), 2e-3);
    EXPECT_EQ(r.misfit.size(), cfg.steps + 1);
    EXPECT_EQ(r.z0, Vector::Zero(8));
}

TEST(Lsi, ObjectiveDecreasesAndSettles) {
    Rng rng(11);
    const MlpNet dec = smooth_decoder(rng, 4, 12);
    const Vector y = dec.forward(gaussian_matrix(rng, 1, 4)).row(0).transpose();
    const Vector z_init = gaussian_vector(rng, 4);
    LsiConfig cfg;
    cfg.steps = 500;
    const LsiResult r = lsi(dec, ForwardOp::identity(12), y, z_init, z_init, cfg);
    EXPECT_LE(r.best_objective, r.objective.front());
    EXPECT_LE(r.objective.back(), r.objective.front());
    const double lowest = *std::min_element(r.objective.begin(), r.objective.end());
    EXPECT_EQ(lowest, r.best_objective);
    EXPECT_LE(r.objective.back(), 1.05 * lowest + 1e-12);
    EXPECT_LE((r.x_hat - dec.forward(Matrix(r.z_star.transpose())).row(0).transpose()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Lsi, ReferenceIrrelevantWithoutRegularization) {
    Rng rng(12);
    const MlpNet dec = smooth_decoder(rng, 3, 9);
    const Vector y = gaussian_vector(rng, 9), z_init = gaussian_vector(rng, 3);
    LsiConfig cfg;
    cfg.steps = 60;
    cfg.alpha = 0.0;
    const LsiResult a = lsi(dec, ForwardOp::identity(9), y, z_init, gaussian_vector(rng, 3), cfg);
    const LsiResult b = lsi(dec, ForwardOp::identity(9), y, z_init, gaussian_vector(rng, 3), cfg);
    EXPECT_EQ(a.z_star, b.z_star);
    EXPECT_EQ(a.misfit, b.misfit);
}

TEST(Lsi, ColdStartIsPlainDecoderInversion) {
    Rng rng(13);
    ModelSpec spec;
    spec.latent_x = spec.latent_y = 3;
    spec.hidden = {6};
    spec.activation = Activation::silu;
    const PairedModel m = make_paired_mlp(8, 8, spec, rng);
    Vector keep = Vector::Ones(8);
    keep[2] = keep[5] = 0.0;
    const ForwardOp op = ForwardOp::mask(keep);
    const Vector y = gaussian_vector(rng, 8);
    LsiConfig cfg;
    cfg.steps = 40;
    cfg.warm_start = false;
    const LsiResult r = lsi(m, op, y, cfg);

    // min_z 1/2 |P d(z) - y|^2 by hand: reverse mode through d_x, ADAM from z = 0.
    Vector z = Vector::Zero(3);
    AdamState adam(cfg.lr);
    std::vector<double> trace;
    for (std::size_t k = 0; k <= cfg.steps; ++k) {
        Tape t;
        const Vector xz = m.dec_x.forward(Matrix(z.transpose()), t).row(0).transpose();
        const Vector res = xz.cwiseProduct(keep) - y;
        trace.push_back(0.5 * res.squaredNorm());
        if (k == cfg.steps) break;
        const Vector g = m.dec_x.backward(t, Matrix(res.cwiseProduct(keep).transpose())).input.row(0).transpose();
        adam_step(z, g, adam);
    }
    ASSERT_EQ(trace.size(), r.misfit.size());
    for (std::size_t k = 0; k < trace.size(); ++k) EXPECT_NEAR(trace[k], r.misfit[k], 1e-14);
}

TEST(Lsi, NonFiniteDataDiverges) {
    Rng rng(14);
    const MlpNet dec = smooth_decoder(rng, 3, 5);
    Vector y = gaussian_vector(rng, 5);
    y[2] = std::numeric_limits<double>::quiet_NaN();
    try {
        (void)lsi(dec, ForwardOp::identity(5), y, Vector::Zero(3), Vector::Zero(3), LsiConfig{});
        FAIL() << "expected divergence";
    } catch (const DivergenceError& e) {
        EXPECT_EQ(e.index(), 0u);
    }
}

TEST(Lsi, ConfigAndDimensionChecks) {
    Rng rng(15);
    const MlpNet dec = smooth_decoder(rng, 3, 5);
    LsiConfig cfg;
    cfg.steps = 0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = LsiConfig{};
    cfg.alpha = -1.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    EXPECT_THROW(lsi(dec, ForwardOp::identity(4), Vector::Zero(4), Vector::Zero(3), Vector::Zero(3), LsiConfig{}),
                 std::invalid_argument);
    EXPECT_THROW(lsi(dec, ForwardOp::identity(5), Vector::Zero(5), Vector::Zero(2), Vector::Zero(2), LsiConfig{}),
                 std::invalid_argument);
}

TEST(Lsi, VpaeOverloadUsesMappedMean) {
    Rng rng(16);
    ModelSpec spec;
    spec.latent_x = spec.latent_y = 3;
    spec.hidden = {6};
    const PairedModel paired = make_paired_mlp(6, 6, spec, rng);
    const VpaeModel v = vpae_from_paired(paired);
    const Vector y = gaussian_vector(rng, 6);
    LsiConfig cfg;
    cfg.steps = 20;
    const LsiResult a = lsi(paired, ForwardOp::identity(6), y, cfg);
    const LsiResult b = lsi(v, ForwardOp::identity(6), y, cfg, rng);
    EXPECT_LE((a.z0 - b.z0).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((a.x_hat - b.x_hat).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(SelectAlpha, PicksGridMinimum) {
    Rng rng(17);
    ModelSpec spec;
    spec.latent_x = spec.latent_y = 3;
    spec.hidden = {6};
    const PairedModel m = make_paired_mlp(6, 6, spec, rng);
    const Matrix x = gaussian_matrix(rng, 3, 6).cwiseAbs();
    const Matrix y = x + 0.1 * gaussian_matrix(rng, 3, 6);
    const std::vector<ForwardOp> ops(3, ForwardOp::identity(6));
    LsiConfig cfg;
    cfg.steps = 30;
    const AlphaSelection sel = select_alpha(m, ops, y, x, cfg);
    ASSERT_EQ(sel.mean_rel_err.size(), default_alpha_grid().size());
    const auto best = std::min_element(sel.mean_rel_err.begin(), sel.mean_rel_err.end());
    EXPECT_EQ(sel.alpha, sel.grid[static_cast<std::size_t>(best - sel.mean_rel_err.begin())]);
    EXPECT_THROW(select_alpha(m, {}, y, x, cfg), std::invalid_argument);
}
