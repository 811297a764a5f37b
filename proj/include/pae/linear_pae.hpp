#pragma once

// Closed-form linear paired autoencoders: the optimal rank-r autoencoder of a
// second moment, the optimal latent maps between two linear autoencoders,
// and the computable reconstruction-error bound for all-linear models.

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "pae/error.hpp"
#include "pae/numerics.hpp"
#include "pae/paired.hpp"

namespace pae {

// Gamma = (1/N) sum x_i x_i^T + ridge * I with symmetric square root L.
struct SecondMoment {
    Matrix gamma;
    Matrix factor;  // L, L L^T = gamma
    double ridge = 0.0;
};

// Symmetric square root V sqrt(max(lambda, 0)) V^T.
inline Matrix symmetric_sqrt(const Matrix& sym) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
    if (eig.info() != Eigen::Success) throw NumericalError("symmetric_sqrt: eigendecomposition failed");
    const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

inline SecondMoment second_moment_from_gamma(Matrix gamma) {
    if (gamma.rows() != gamma.cols()) throw std::invalid_argument("second moment must be square");
    SecondMoment sm;
    sm.gamma = 0.5 * (gamma + gamma.transpose());
    sm.factor = symmetric_sqrt(sm.gamma);
    return sm;
}

// Raw (uncentered) second moment of the rows of `samples`. Without an explicit
// ridge, tau = 1e-10 * trace(Gamma) / n.
inline SecondMoment second_moment_factor(const Matrix& samples, std::optional<double> ridge = std::nullopt) {
    if (samples.rows() == 0) throw std::invalid_argument("second_moment_factor: need at least one sample");
    Matrix gamma = samples.transpose() * samples / static_cast<double>(samples.rows());
    const double n = static_cast<double>(gamma.rows());
    const double tau = ridge.value_or(1e-10 * gamma.trace() / n);
    if (!(tau >= 0.0)) throw std::invalid_argument("second_moment_factor: ridge must be >= 0");
    gamma.diagonal().array() += tau;
    SecondMoment sm = second_moment_from_gamma(std::move(gamma));
    sm.ridge = tau;
    return sm;
}

struct LinearAE {
    Matrix encoder;  // r x n
    Matrix decoder;  // n x r

    [[nodiscard]] std::size_t rank() const { return static_cast<std::size_t>(encoder.rows()); }
    [[nodiscard]] Matrix composite() const { return decoder * encoder; }
};

// Optimal rank-r linear autoencoder: E = U_r^T, D = U_r from the SVD of L.
// The squared Frobenius error |D E L - L|_F^2 equals the sum of the squared
// trailing singular values of L.
inline LinearAE fit_linear_ae(const SecondMoment& sm, std::size_t r) {
    const auto n = static_cast<std::size_t>(sm.factor.rows());
    if (r < 1 || r > n) throw std::invalid_argument("fit_linear_ae: rank must satisfy 1 <= r <= n");
    Svd f = svd(sm.factor);
    Matrix ur = f.u.leftCols(static_cast<Eigen::Index>(r));
    return {ur.transpose(), ur};
}

// |A L - L|_F^2.
inline double linear_ae_error(const Matrix& composite, const Matrix& factor) {
    return (composite * factor - factor).squaredNorm();
}

namespace detail {

// rhs * G^{-1} for symmetric G, after checking G is numerically invertible.
inline Matrix right_solve_gram(const Matrix& rhs, const Matrix& gram, const char* who) {
    const Svd g = svd(gram);
    if (g.s.size() == 0 || g.s[g.s.size() - 1] <= 1e-12) {
        throw NumericalError(std::string(who) + ": Gram matrix is rank deficient (encoder lacks full row rank)");
    }
    return gram.transpose().fullPivLu().solve(rhs.transpose()).transpose();
}

}  // namespace detail

struct LinearMaps {
    Matrix map;      // r_y x r_x
    Matrix map_inv;  // r_x x r_y
};

// M = E_y F Gamma_x E_x^T (E_x Gamma_x E_x^T)^{-1}.
inline Matrix optimal_forward_map(const Matrix& enc_x, const Matrix& enc_y, const Matrix& forward,
                                  const SecondMoment& sm_x) {
    const Matrix gram = enc_x * sm_x.gamma * enc_x.transpose();
    return detail::right_solve_gram(enc_y * forward * sm_x.gamma * enc_x.transpose(), gram, "optimal_forward_map");
}

// M_inv = E_x Gamma_x^T F^T E_y^T (E_y Gamma_y E_y^T)^{-1}, Gamma_y = F Gamma_x F^T + Gamma_eps.
inline Matrix optimal_inverse_map(const Matrix& enc_x, const Matrix& enc_y, const Matrix& forward,
                                  const SecondMoment& sm_x, const Matrix& noise_cov) {
    const Matrix gamma_y = forward * sm_x.gamma * forward.transpose() + noise_cov;
    const Matrix gram = enc_y * gamma_y * enc_y.transpose();
    return detail::right_solve_gram(enc_x * sm_x.gamma.transpose() * forward.transpose() * enc_y.transpose(), gram,
                                    "optimal_inverse_map");
}

// Least-squares latent maps from paired samples, used when F is not known
// explicitly: M = C_yx (E_x Gamma_x E_x^T)^{-1} with cross moments of the encodings.
inline LinearMaps fit_latent_maps(const Matrix& enc_x, const Matrix& enc_y, const Matrix& x, const Matrix& y) {
    const double n = static_cast<double>(x.rows());
    const Matrix zx = x * enc_x.transpose();
    const Matrix zy = y * enc_y.transpose();
    const Matrix cxx = zx.transpose() * zx / n;
    const Matrix cyy = zy.transpose() * zy / n;
    const Matrix cyx = zy.transpose() * zx / n;
    return {detail::right_solve_gram(cyx, cxx, "fit_latent_maps"),
            detail::right_solve_gram(cyx.transpose(), cyy, "fit_latent_maps")};
}

// A PairedModel whose six parts are the given matrices.
inline PairedModel make_linear_paired(const LinearAE& ae_x, const LinearAE& ae_y, const LinearMaps& maps) {
    PairedModel m{MlpNet::linear(ae_x.encoder), MlpNet::linear(ae_x.decoder), MlpNet::linear(ae_y.encoder),
                  MlpNet::linear(ae_y.decoder), MlpNet::linear(maps.map), MlpNet::linear(maps.map_inv)};
    m.validate();
    return m;
}

// Data-driven linear paired autoencoder: optimal autoencoders of each side's
// second moment, latent maps by least squares on the encodings.
inline PairedModel fit_linear_paired(const Matrix& x, const Matrix& y, std::size_t r_x, std::size_t r_y) {
    LinearAE ax = fit_linear_ae(second_moment_factor(x), r_x);
    LinearAE ay = fit_linear_ae(second_moment_factor(y), r_y);
    return make_linear_paired(ax, ay, fit_latent_maps(ax.encoder, ay.encoder, x, y));
}

// ---------------------------------------------------------------------------
// Error bound
// ---------------------------------------------------------------------------

// |x_hat - x| <= L_x (|M_inv| (L_y delta + xi_y) + xi_M) + xi_x.
// The xi constants are empirical maxima over the supplied dataset, not
// suprema over the whole space.
struct ErrorBoundReport {
    double lip_dx = 0.0;        // |D_x|_2
    double lip_ey = 0.0;        // |E_y|_2
    double norm_map_inv = 0.0;  // |M_inv|_2
    double xi_y = 0.0;          // max |e_y(d_y(z_y)) - z_y|
    double xi_m = 0.0;          // max |M_inv M z_x - z_x|
    double xi_x = 0.0;          // max |d_x(e_x(x)) - x|
    double delta = 0.0;
    double bound = 0.0;
};

inline double assemble_bound(const ErrorBoundReport& r) {
    return r.lip_dx * (r.norm_map_inv * (r.lip_ey * r.delta + r.xi_y) + r.xi_m) + r.xi_x;
}

// `x`, `y` rows are dataset pairs. xi_y is maximized over the data encodings
// e_y(y_i) and the mapped encodings M e_x(x_i), the two places the bound
// evaluates the y-autoencoder in latent space.
inline ErrorBoundReport linear_error_bound(const PairedModel& model, const Matrix& x, const Matrix& y, double delta) {
    if (x.rows() == 0) throw std::invalid_argument("linear_error_bound: empty dataset");
    if (!(delta >= 0.0)) throw std::invalid_argument("linear_error_bound: delta must be >= 0");
    for (const auto* p : model.parts()) {
        if (!p->is_linear()) throw std::invalid_argument("linear_error_bound: all six components must be linear");
    }
    const Matrix ex = model.enc_x.as_matrix(), dx = model.dec_x.as_matrix();
    const Matrix ey = model.enc_y.as_matrix(), dy = model.dec_y.as_matrix();
    const Matrix m = model.map.as_matrix(), mi = model.map_inv.as_matrix();

    ErrorBoundReport r;
    r.lip_dx = spectral_norm(dx);
    r.lip_ey = spectral_norm(ey);
    r.norm_map_inv = spectral_norm(mi);
    r.delta = delta;

    const Matrix zx = x * ex.transpose();
    const Matrix zy = y * ey.transpose();
    const Matrix zy_mapped = zx * m.transpose();
    const Matrix ay = ey * dy - Matrix::Identity(ey.rows(), ey.rows());
    const Matrix am = mi * m - Matrix::Identity(ex.rows(), ex.rows());
    r.xi_y = std::max((zy * ay.transpose()).rowwise().norm().maxCoeff(),
                      (zy_mapped * ay.transpose()).rowwise().norm().maxCoeff());
    r.xi_m = (zx * am.transpose()).rowwise().norm().maxCoeff();
    r.xi_x = (zx * dx.transpose() - x).rowwise().norm().maxCoeff();
    r.bound = assemble_bound(r);
    return r;
}

}  // namespace pae
