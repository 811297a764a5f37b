#pragma once

// Linear forward operators and latent-space inversion (LSI):
//   min_z  1/2 |F d_x(z) - y|^2 + alpha/2 |z - z0|^2
// solved with ADAM, gradients through the decoder in reverse mode and F^T
// for the data term.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "pae/error.hpp"
#include "pae/neuralnet.hpp"
#include "pae/numerics.hpp"
#include "pae/paired.hpp"
#include "pae/variational.hpp"

namespace pae {

class ForwardOp {
public:
    enum class Kind { mask, blur, dense };

    // Diagonal 0/1 operator.
    static ForwardOp mask(Vector keep) {
        for (Eigen::Index i = 0; i < keep.size(); ++i) {
            if (keep[i] != 0.0 && keep[i] != 1.0) throw std::invalid_argument("ForwardOp::mask: entries must be 0 or 1");
        }
        ForwardOp op;
        op.kind_ = Kind::mask;
        op.in_ = op.out_ = static_cast<std::size_t>(keep.size());
        op.mask_ = std::move(keep);
        return op;
    }

    static ForwardOp identity(std::size_t n) { return mask(Vector::Ones(static_cast<Eigen::Index>(n))); }

    // Separable "same"-size blur on a height x width image with zero padding:
    // vertical pass with `kernel_v`, horizontal pass with `kernel_h`. Kernels
    // must have odd length and are centred.
    static ForwardOp blur(std::size_t height, std::size_t width, Vector kernel_v, Vector kernel_h) {
        if (height == 0 || width == 0) throw std::invalid_argument("ForwardOp::blur: empty image");
        for (const Vector* k : {&kernel_v, &kernel_h}) {
            if (k->size() == 0 || k->size() % 2 == 0) throw std::invalid_argument("ForwardOp::blur: kernels need odd length");
        }
        ForwardOp op;
        op.kind_ = Kind::blur;
        op.height_ = height;
        op.width_ = width;
        op.in_ = op.out_ = height * width;
        op.kv_ = std::move(kernel_v);
        op.kh_ = std::move(kernel_h);
        return op;
    }

    static ForwardOp dense(Matrix a) {
        if (a.size() == 0) throw std::invalid_argument("ForwardOp::dense: empty matrix");
        ForwardOp op;
        op.kind_ = Kind::dense;
        op.in_ = static_cast<std::size_t>(a.cols());
        op.out_ = static_cast<std::size_t>(a.rows());
        op.dense_ = std::move(a);
        return op;
    }

    [[nodiscard]] Kind kind() const { return kind_; }
    [[nodiscard]] std::size_t input_dim() const { return in_; }
    [[nodiscard]] std::size_t output_dim() const { return out_; }
    [[nodiscard]] const Vector& mask_vector() const { return mask_; }

    [[nodiscard]] Vector apply(const Vector& x) const {
        check(x, in_, "apply");
        switch (kind_) {
            case Kind::mask: return x.cwiseProduct(mask_);
            case Kind::blur: return separable(x, false);
            case Kind::dense: return dense_ * x;
        }
        return x;
    }

    [[nodiscard]] Vector adjoint(const Vector& r) const {
        check(r, out_, "adjoint");
        switch (kind_) {
            case Kind::mask: return r.cwiseProduct(mask_);
            case Kind::blur: return separable(r, true);
            case Kind::dense: return dense_.transpose() * r;
        }
        return r;
    }

    // Dense matrix of the operator (column j = apply(e_j)).
    [[nodiscard]] Matrix to_matrix() const {
        Matrix a(static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
        Vector e = Vector::Zero(static_cast<Eigen::Index>(in_));
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            e[j] = 1.0;
            a.col(j) = apply(e);
            e[j] = 0.0;
        }
        return a;
    }

private:
    static void check(const Vector& v, std::size_t n, const char* what) {
        if (static_cast<std::size_t>(v.size()) != n) {
            throw std::invalid_argument(std::string("ForwardOp::") + what + ": expected length " + std::to_string(n) +
                                        ", got " + std::to_string(v.size()));
        }
    }

    // out[i] = sum_a k[a] in[i + a - c] (forward); the transpose sums
    // out[i] = sum_a k[a] in[i - a + c].
    static void pass(const double* in, double* out, std::size_t n, std::size_t stride, const Vector& k, bool transpose) {
        const auto c = static_cast<std::ptrdiff_t>(k.size() / 2);
        const auto len = static_cast<std::ptrdiff_t>(n);
        for (std::ptrdiff_t i = 0; i < len; ++i) {
            double acc = 0.0;
            for (std::ptrdiff_t a = 0; a < k.size(); ++a) {
                const std::ptrdiff_t j = transpose ? i - a + c : i + a - c;
                if (j >= 0 && j < len) acc += k[a] * in[j * static_cast<std::ptrdiff_t>(stride)];
            }
            out[i * static_cast<std::ptrdiff_t>(stride)] = acc;
        }
    }

    [[nodiscard]] Vector separable(const Vector& v, bool transpose) const {
        Vector tmp(v.size()), out(v.size());
        for (std::size_t col = 0; col < width_; ++col) {
            pass(v.data() + col, tmp.data() + col, height_, width_, kv_, transpose);
        }
        for (std::size_t row = 0; row < height_; ++row) {
            pass(tmp.data() + row * width_, out.data() + row * width_, width_, 1, kh_, transpose);
        }
        return out;
    }

    Kind kind_ = Kind::mask;
    std::size_t in_ = 0, out_ = 0;
    Vector mask_;
    std::size_t height_ = 0, width_ = 0;
    Vector kv_, kh_;
    Matrix dense_;
};

// Normalized 1-D Gaussian taps of the given odd length.
inline Vector gaussian_kernel(std::size_t length, double stddev) {
    if (length == 0 || length % 2 == 0 || !(stddev > 0.0)) throw std::invalid_argument("gaussian_kernel: bad arguments");
    Vector k(static_cast<Eigen::Index>(length));
    const double c = static_cast<double>(length / 2);
    for (Eigen::Index i = 0; i < k.size(); ++i) {
        const double d = static_cast<double>(i) - c;
        k[i] = std::exp(-0.5 * d * d / (stddev * stddev));
    }
    return k / k.sum();
}

// ---------------------------------------------------------------------------
// Warm start
// ---------------------------------------------------------------------------

// z0 = M_inv(e_y(y)).
inline Vector warm_start(const PairedModel& model, const Vector& y) {
    return model.map_inv.forward(model.enc_y.forward(Matrix(y.transpose()))).row(0).transpose();
}

enum class VpaeWarmStart { mapped_mean, sample, sample_mean };

// VPAE latent initial guess from the mapped head (mu_hat_x | s_hat_x): the
// mean itself, a single reparameterized draw, or the mean of `n` draws.
inline Vector warm_start(const VpaeModel& model, const Vector& y, VpaeWarmStart mode, Rng& rng, std::size_t n = 100) {
    const GaussianLatent g = split_head(vpae_mapped_heads(model, Matrix(y.transpose())).row(0).transpose());
    switch (mode) {
        case VpaeWarmStart::mapped_mean: return g.mu;
        case VpaeWarmStart::sample: return reparameterize(g, rng);
        case VpaeWarmStart::sample_mean: {
            if (n == 0) throw std::invalid_argument("warm_start: n must be >= 1");
            Vector acc = Vector::Zero(g.mu.size());
            for (std::size_t i = 0; i < n; ++i) acc += reparameterize(g, rng);
            return acc / static_cast<double>(n);
        }
    }
    return g.mu;
}

// ---------------------------------------------------------------------------
// LSI
// ---------------------------------------------------------------------------

struct LsiConfig {
    std::size_t steps = 500;
    double lr = 1e-2;
    double alpha = 0.0;
    bool warm_start = true;

    void validate() const {
        if (steps < 1) throw std::invalid_argument("LsiConfig: steps must be >= 1");
        if (!(alpha >= 0.0)) throw std::invalid_argument("LsiConfig: alpha must be >= 0");
        if (!(lr > 0.0)) throw std::invalid_argument("LsiConfig: lr must be positive");
    }
};

struct LsiObjective {
    double value = 0.0;
    double misfit = 0.0;  // 1/2 |F d(z) - y|^2
    Vector grad;
};

inline LsiObjective lsi_objective(const MlpNet& decoder, const ForwardOp& op, const Vector& y, const Vector& z,
                                  const Vector& z0, double alpha, bool with_grad = true) {
    Tape tape;
    const Matrix xz = decoder.forward(Matrix(z.transpose()), tape);
    const Vector r = op.apply(xz.row(0).transpose()) - y;
    LsiObjective out;
    out.misfit = 0.5 * r.squaredNorm();
    out.value = out.misfit + 0.5 * alpha * (z - z0).squaredNorm();
    if (with_grad) {
        const Matrix g = op.adjoint(r).transpose();
        out.grad = decoder.backward(tape, g).input.row(0).transpose() + alpha * (z - z0);
    }
    return out;
}

struct LsiResult {
    Vector z0;
    Vector z_star;  // best-objective iterate
    Vector x_hat;   // d_x(z_star)
    // Entry k is the value at iterate k (k = 0 is the initialization);
    // steps + 1 entries.
    std::vector<double> misfit;
    std::vector<double> objective;
    double best_objective = 0.0;
    double best_misfit = 0.0;
};

// Runs ADAM from `z_init` on the objective with reference `z0`.
inline LsiResult lsi(const MlpNet& decoder, const ForwardOp& op, const Vector& y, const Vector& z_init,
                     const Vector& z0, const LsiConfig& cfg) {
    cfg.validate();
    if (static_cast<std::size_t>(y.size()) != op.output_dim() || decoder.output_dim() != op.input_dim()) {
        throw std::invalid_argument("lsi: operator/decoder/data dimensions do not match");
    }
    if (static_cast<std::size_t>(z_init.size()) != decoder.input_dim() || z0.size() != z_init.size()) {
        throw std::invalid_argument("lsi: latent dimension mismatch");
    }
    LsiResult res;
    res.z0 = z0;
    res.misfit.reserve(cfg.steps + 1);
    res.objective.reserve(cfg.steps + 1);
    AdamState adam(cfg.lr);
    Vector z = z_init;
    res.best_objective = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k <= cfg.steps; ++k) {
        const bool last = k == cfg.steps;
        auto obj = lsi_objective(decoder, op, y, z, z0, cfg.alpha, !last);
        if (!std::isfinite(obj.value) || (!last && !obj.grad.allFinite())) {
            throw DivergenceError("lsi: non-finite objective at iteration " + std::to_string(k), k);
        }
        res.misfit.push_back(obj.misfit);
        res.objective.push_back(obj.value);
        if (obj.value < res.best_objective) {
            res.best_objective = obj.value;
            res.best_misfit = obj.misfit;
            res.z_star = z;
        }
        if (!last) adam_step(z, obj.grad, adam);
    }
    res.x_hat = decoder.forward(Matrix(res.z_star.transpose())).row(0).transpose();
    return res;
}

// Warm start: z = z0 = M_inv(e_y(y)). Cold start: z = z0 = 0.
inline LsiResult lsi(const PairedModel& model, const ForwardOp& op, const Vector& y, const LsiConfig& cfg) {
    const Vector z0 = cfg.warm_start ? warm_start(model, y)
                                     : Vector::Zero(static_cast<Eigen::Index>(model.dec_x.input_dim()));
    return lsi(model.dec_x, op, y, z0, z0, cfg);
}

inline LsiResult lsi(const VpaeModel& model, const ForwardOp& op, const Vector& y, const LsiConfig& cfg, Rng& rng,
                     VpaeWarmStart mode = VpaeWarmStart::mapped_mean) {
    const Vector z0 = cfg.warm_start ? warm_start(model, y, mode, rng)
                                     : Vector::Zero(static_cast<Eigen::Index>(model.vx.latent_dim()));
    return lsi(model.vx.decoder, op, y, z0, z0, cfg);
}

inline const std::vector<double>& default_alpha_grid() {
    static const std::vector<double> grid{0.0, 1e-3, 1e-2, 1e-1, 1.0};
    return grid;
}

struct AlphaSelection {
    double alpha = 0.0;
    std::vector<double> grid;
    std::vector<double> mean_rel_err;  // per grid entry
};

// Picks alpha by mean relative error of LSI estimates against held-out truth.
// Row i of `y`/`x` pairs with ops[i].
inline AlphaSelection select_alpha(const PairedModel& model, const std::vector<ForwardOp>& ops, const Matrix& y,
                                   const Matrix& x, LsiConfig cfg,
                                   const std::vector<double>& grid = default_alpha_grid()) {
    if (grid.empty()) throw std::invalid_argument("select_alpha: empty grid");
    if (ops.size() != static_cast<std::size_t>(y.rows()) || y.rows() != x.rows() || y.rows() == 0) {
        throw std::invalid_argument("select_alpha: need one operator per held-out pair");
    }
    AlphaSelection sel;
    sel.grid = grid;
    double best = std::numeric_limits<double>::infinity();
    for (double a : grid) {
        cfg.alpha = a;
        double total = 0.0;
        for (Eigen::Index i = 0; i < y.rows(); ++i) {
            const Vector truth = x.row(i).transpose();
            const auto res = lsi(model, ops[static_cast<std::size_t>(i)], y.row(i).transpose(), cfg);
            total += (res.x_hat - truth).norm() / std::max(truth.norm(), 1e-300);
        }
        const double mean = total / static_cast<double>(y.rows());
        sel.mean_rel_err.push_back(mean);
        if (mean < best) {
            best = mean;
            sel.alpha = a;
        }
    }
    return sel;
}

}  // namespace pae
