#pragma once

// The paired autoencoder: an x-autoencoder (e_x, d_x), a y-autoencoder
// (e_y, d_y) and latent maps M: Z_x -> Z_y, M_inv: Z_y -> Z_x. Provides the
// weighted four-term training objective with its gradient, an ADAM training
// loop, and the two surrogate maps built from the trained pieces.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "pae/error.hpp"
#include "pae/neuralnet.hpp"
#include "pae/numerics.hpp"

namespace pae {

struct PairedModel {
    MlpNet enc_x, dec_x, enc_y, dec_y;
    MlpNet map;      // M: latent x -> latent y
    MlpNet map_inv;  // M_inv: latent y -> latent x

    static constexpr std::size_t kParts = 6;

    [[nodiscard]] std::size_t dim_x() const { return enc_x.input_dim(); }
    [[nodiscard]] std::size_t dim_y() const { return enc_y.input_dim(); }
    [[nodiscard]] std::size_t latent_x() const { return enc_x.output_dim(); }
    [[nodiscard]] std::size_t latent_y() const { return enc_y.output_dim(); }

    [[nodiscard]] std::array<const MlpNet*, kParts> parts() const {
        return {&enc_x, &dec_x, &enc_y, &dec_y, &map, &map_inv};
    }
    [[nodiscard]] std::array<MlpNet*, kParts> parts() { return {&enc_x, &dec_x, &enc_y, &dec_y, &map, &map_inv}; }

    static const std::array<const char*, kParts>& part_names() {
        static const std::array<const char*, kParts> names{"enc_x", "dec_x", "enc_y", "dec_y", "map", "map_inv"};
        return names;
    }

    void validate() const {
        auto need = [](bool ok, const char* what) {
            if (!ok) throw std::invalid_argument(std::string("PairedModel: ") + what);
        };
        need(dec_x.input_dim() == latent_x() && dec_x.output_dim() == dim_x(), "d_x dims do not match e_x");
        need(dec_y.input_dim() == latent_y() && dec_y.output_dim() == dim_y(), "d_y dims do not match e_y");
        need(map.input_dim() == latent_x() && map.output_dim() == latent_y(), "M must map latent x to latent y");
        need(map_inv.input_dim() == latent_y() && map_inv.output_dim() == latent_x(),
             "M_inv must map latent y to latent x");
    }

    [[nodiscard]] std::size_t num_params() const {
        std::size_t n = 0;
        for (const auto* p : parts()) n += p->num_params();
        return n;
    }

    // Offsets of each part inside the flat parameter vector.
    [[nodiscard]] std::array<Eigen::Index, kParts + 1> offsets() const {
        std::array<Eigen::Index, kParts + 1> off{};
        auto ps = parts();
        for (std::size_t i = 0; i < kParts; ++i) off[i + 1] = off[i] + static_cast<Eigen::Index>(ps[i]->num_params());
        return off;
    }

    [[nodiscard]] Vector params() const {
        Vector out(static_cast<Eigen::Index>(num_params()));
        auto off = offsets();
        auto ps = parts();
        for (std::size_t i = 0; i < kParts; ++i) out.segment(off[i], off[i + 1] - off[i]) = ps[i]->params();
        return out;
    }

    void set_params(const Eigen::Ref<const Vector>& p) {
        if (static_cast<std::size_t>(p.size()) != num_params()) throw std::invalid_argument("PairedModel::set_params: size mismatch");
        auto off = offsets();
        auto ps = parts();
        for (std::size_t i = 0; i < kParts; ++i) {
            if (off[i + 1] > off[i]) ps[i]->set_params(p.segment(off[i], off[i + 1] - off[i]));
        }
    }

    // Every component the identity on R^n.
    static PairedModel identity(std::size_t n) {
        auto id = MlpNet::identity(n);
        return {id, id, id, id, id, id};
    }
};

enum class MapKind { linear, identity, mlp };

struct ModelSpec {
    std::size_t latent_x = 32;
    std::size_t latent_y = 32;
    std::vector<std::size_t> hidden{256, 128};
    Activation activation = Activation::relu;
    Activation output = Activation::sigmoid;
    MapKind map_kind = MapKind::linear;
    std::vector<std::size_t> map_hidden{};  // used when map_kind == mlp
};

// Encoders: dim -> hidden... -> latent (identity output). Decoders mirror the
// hidden widths and end in `spec.output`.
inline PairedModel make_paired_mlp(std::size_t dim_x, std::size_t dim_y, const ModelSpec& spec, Rng& rng) {
    auto encoder = [&](std::size_t dim, std::size_t latent) {
        std::vector<std::size_t> w{dim};
        w.insert(w.end(), spec.hidden.begin(), spec.hidden.end());
        w.push_back(latent);
        return MlpNet::dense(w, spec.activation, Activation::identity, rng);
    };
    auto decoder = [&](std::size_t latent, std::size_t dim) {
        std::vector<std::size_t> w{latent};
        w.insert(w.end(), spec.hidden.rbegin(), spec.hidden.rend());
        w.push_back(dim);
        return MlpNet::dense(w, spec.activation, spec.output, rng);
    };
    auto latent_map = [&](std::size_t from, std::size_t to) {
        switch (spec.map_kind) {
            case MapKind::identity:
                if (from != to) throw std::invalid_argument("identity latent maps require latent_x == latent_y");
                return MlpNet::identity(from);
            case MapKind::linear: return MlpNet({{from, to, Activation::identity, false}}, rng);
            case MapKind::mlp: {
                std::vector<std::size_t> w{from};
                w.insert(w.end(), spec.map_hidden.begin(), spec.map_hidden.end());
                w.push_back(to);
                return MlpNet::dense(w, spec.activation, Activation::identity, rng);
            }
        }
        return MlpNet::identity(from);
    };
    PairedModel m;
    m.enc_x = encoder(dim_x, spec.latent_x);
    m.dec_x = decoder(spec.latent_x, dim_x);
    m.enc_y = encoder(dim_y, spec.latent_y);
    m.dec_y = decoder(spec.latent_y, dim_y);
    m.map = latent_map(spec.latent_x, spec.latent_y);
    m.map_inv = latent_map(spec.latent_y, spec.latent_x);
    m.validate();
    return m;
}

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

enum class LossVariant {
    combined,         // both autoencoders + both decoded surrogate terms
    full_mappings,    // decoded surrogate terms only
    latent_mappings,  // both autoencoders + latent-space map terms
};

struct TrainConfig {
    double alpha_x = 1.0;
    double alpha_y = 1.0;
    double alpha_m = 1.0;
    double alpha_m_inv = 1.0;
    double lr = 1e-3;
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    LossVariant variant = LossVariant::combined;
    // Autoencoders first (maps frozen), then maps (autoencoders frozen).
    bool two_stage = false;

    void validate() const {
        for (double a : {alpha_x, alpha_y, alpha_m, alpha_m_inv}) {
            if (!(a >= 0.0)) throw std::invalid_argument("TrainConfig: weights must be nonnegative");
        }
        if (alpha_x + alpha_y + alpha_m + alpha_m_inv <= 0.0) {
            throw std::invalid_argument("TrainConfig: at least one weight must be positive");
        }
        if (!(lr >= 0.0)) throw std::invalid_argument("TrainConfig: lr must be >= 0");
        if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
    }
};

struct PairedLoss {
    double value = 0.0;
    Vector grad;                     // PairedModel::params() layout; empty when not requested
    std::array<double, 4> terms{};  // unweighted: ae_x, ae_y, forward, inverse (0 when weight is 0)
};

namespace detail {

inline void accumulate(Vector& grad, Eigen::Index offset, const Vector& part) {
    if (part.size() > 0) grad.segment(offset, part.size()) += part;
}

}  // namespace detail

// Weighted objective over aligned rows of `x` and `y`; each term is an MSE
// averaged over batch and coordinates. `trainable` zeroes the gradient of
// frozen parts (order: enc_x, dec_x, enc_y, dec_y, map, map_inv).
inline PairedLoss paired_loss(const PairedModel& model, const Matrix& x, const Matrix& y, const TrainConfig& cfg,
                              bool with_grad = true,
                              const std::array<bool, PairedModel::kParts>& trainable = {true, true, true, true, true,
                                                                                       true}) {
    if (x.rows() == 0) throw std::invalid_argument("paired_loss: empty batch");
    if (x.rows() != y.rows()) throw std::invalid_argument("paired_loss: x and y batches are not aligned");
    if (static_cast<std::size_t>(x.cols()) != model.dim_x() || static_cast<std::size_t>(y.cols()) != model.dim_y()) {
        throw std::invalid_argument("paired_loss: data width does not match the model");
    }

    const auto off = model.offsets();
    PairedLoss out;
    if (with_grad) out.grad = Vector::Zero(off.back());

    Tape tex, tey;
    const Matrix zx = model.enc_x.forward(x, tex);
    const Matrix zy = model.enc_y.forward(y, tey);
    Matrix gzx = Matrix::Zero(zx.rows(), zx.cols());
    Matrix gzy = Matrix::Zero(zy.rows(), zy.cols());

    // Adds alpha * mse(pred, target) and returns d/dpred.
    auto term = [&](std::size_t idx, double alpha, const Matrix& pred, const Matrix& target) -> Matrix {
        const double v = mse(pred, target);
        out.terms[idx] = v;
        out.value += alpha * v;
        if (!with_grad) return {};
        return (2.0 * alpha / static_cast<double>(pred.size())) * (pred - target);
    };

    const bool ae_terms = cfg.variant != LossVariant::full_mappings;
    const bool decoded_maps = cfg.variant != LossVariant::latent_mappings;

    if (ae_terms && cfg.alpha_x != 0.0) {
        Tape t;
        Matrix d = term(0, cfg.alpha_x, model.dec_x.forward(zx, t), x);
        if (with_grad) {
            auto g = model.dec_x.backward(t, d);
            detail::accumulate(out.grad, off[1], g.params);
            gzx += g.input;
        }
    }
    if (ae_terms && cfg.alpha_y != 0.0) {
        Tape t;
        Matrix d = term(1, cfg.alpha_y, model.dec_y.forward(zy, t), y);
        if (with_grad) {
            auto g = model.dec_y.backward(t, d);
            detail::accumulate(out.grad, off[3], g.params);
            gzy += g.input;
        }
    }
    if (cfg.alpha_m != 0.0) {
        Tape tm;
        Matrix zy_hat = model.map.forward(zx, tm);
        Matrix dz;
        if (decoded_maps) {
            Tape td;
            Matrix d = term(2, cfg.alpha_m, model.dec_y.forward(zy_hat, td), y);
            if (with_grad) {
                auto g = model.dec_y.backward(td, d);
                detail::accumulate(out.grad, off[3], g.params);
                dz = std::move(g.input);
            }
        } else {
            dz = term(2, cfg.alpha_m, zy_hat, zy);
            if (with_grad) gzy -= dz;
        }
        if (with_grad) {
            auto g = model.map.backward(tm, dz);
            detail::accumulate(out.grad, off[4], g.params);
            gzx += g.input;
        }
    }
    if (cfg.alpha_m_inv != 0.0) {
        Tape tm;
        Matrix zx_hat = model.map_inv.forward(zy, tm);
        Matrix dz;
        if (decoded_maps) {
            Tape td;
            Matrix d = term(3, cfg.alpha_m_inv, model.dec_x.forward(zx_hat, td), x);
            if (with_grad) {
                auto g = model.dec_x.backward(td, d);
                detail::accumulate(out.grad, off[1], g.params);
                dz = std::move(g.input);
            }
        } else {
            dz = term(3, cfg.alpha_m_inv, zx_hat, zx);
            if (with_grad) gzx -= dz;
        }
        if (with_grad) {
            auto g = model.map_inv.backward(tm, dz);
            detail::accumulate(out.grad, off[5], g.params);
            gzy += g.input;
        }
    }
    if (with_grad) {
        detail::accumulate(out.grad, off[0], model.enc_x.backward(tex, gzx).params);
        detail::accumulate(out.grad, off[2], model.enc_y.backward(tey, gzy).params);
        for (std::size_t i = 0; i < PairedModel::kParts; ++i) {
            if (!trainable[i]) out.grad.segment(off[i], off[i + 1] - off[i]).setZero();
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainResult {
    PairedModel model;
    // history[0]: objective on the full data at initialization;
    // history[e]: mean batch objective during epoch e.
    std::vector<double> history;
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

namespace detail {

// Mini-batch ADAM over shuffled rows; shared by the paired and variational trainers.
// `step(rows, grad_out)` returns the batch objective and fills its gradient.
template <typename BatchFn>
std::vector<double> run_epochs(Vector& params, std::size_t n_rows, std::size_t epochs, std::size_t batch_size,
                               double lr, Rng& rng, BatchFn&& step, const EpochCallback& on_epoch,
                               std::size_t epoch_offset = 0) {
    std::vector<double> history;
    std::vector<Eigen::Index> order(n_rows);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    AdamState adam(lr);
    Vector grad;
    for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng.engine());
        double total = 0.0;
        for (std::size_t start = 0; start < n_rows; start += batch_size) {
            const std::size_t stop = std::min(n_rows, start + batch_size);
            std::vector<Eigen::Index> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(stop));
            const double loss = step(params, rows, grad);
            if (!std::isfinite(loss) || !grad.allFinite()) {
                throw DivergenceError("training diverged: non-finite loss", epoch + epoch_offset);
            }
            total += loss * static_cast<double>(rows.size());
            adam_step(params, grad, adam);
        }
        const double mean = total / static_cast<double>(n_rows);
        history.push_back(mean);
        if (on_epoch) on_epoch(epoch + epoch_offset, mean);
    }
    return history;
}

}  // namespace detail

inline TrainResult train_paired(PairedModel model, const Matrix& x, const Matrix& y, const TrainConfig& cfg,
                                const EpochCallback& on_epoch = {}) {
    cfg.validate();
    model.validate();
    if (x.rows() == 0 || x.rows() != y.rows()) throw std::invalid_argument("train_paired: need aligned, nonempty data");

    TrainResult result;
    const double initial = paired_loss(model, x, y, cfg, false).value;
    if (!std::isfinite(initial)) throw DivergenceError("training diverged: non-finite initial loss", 0);
    result.history.push_back(initial);

    Rng rng(cfg.seed);
    Vector params = model.params();

    auto run_stage = [&](const TrainConfig& stage_cfg, const std::array<bool, PairedModel::kParts>& trainable,
                         std::size_t epoch_offset) {
        auto step = [&](const Vector& p, const std::vector<Eigen::Index>& rows, Vector& grad) {
            model.set_params(p);
            Matrix bx = x(rows, Eigen::all);
            Matrix by = y(rows, Eigen::all);
            auto loss = paired_loss(model, bx, by, stage_cfg, true, trainable);
            grad = std::move(loss.grad);
            return loss.value;
        };
        auto h = detail::run_epochs(params, static_cast<std::size_t>(x.rows()), cfg.epochs, cfg.batch_size, cfg.lr,
                                    rng, step, on_epoch, epoch_offset);
        result.history.insert(result.history.end(), h.begin(), h.end());
    };

    if (!cfg.two_stage) {
        run_stage(cfg, {true, true, true, true, true, true}, 0);
    } else {
        TrainConfig ae = cfg;
        ae.alpha_m = ae.alpha_m_inv = 0.0;
        ae.variant = LossVariant::combined;
        TrainConfig maps = cfg;
        maps.alpha_x = maps.alpha_y = 0.0;
        if (ae.alpha_x + ae.alpha_y > 0.0) run_stage(ae, {true, true, true, true, false, false}, 0);
        if (maps.alpha_m + maps.alpha_m_inv > 0.0) run_stage(maps, {false, false, false, false, true, true}, cfg.epochs);
    }
    model.set_params(params);
    result.model = std::move(model);
    return result;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

// x_hat = d_x(M_inv(e_y(y))), row-wise.
inline Matrix direct_estimate(const PairedModel& model, const Matrix& y) {
    return model.dec_x.forward(model.map_inv.forward(model.enc_y.forward(y)));
}

inline Vector direct_estimate(const PairedModel& model, const Vector& y) {
    return direct_estimate(model, Matrix(y.transpose())).row(0).transpose();
}

// y_hat = d_y(M(e_x(x))), row-wise.
inline Matrix surrogate_forward(const PairedModel& model, const Matrix& x) {
    return model.dec_y.forward(model.map.forward(model.enc_x.forward(x)));
}

inline Vector surrogate_forward(const PairedModel& model, const Vector& x) {
    return surrogate_forward(model, Matrix(x.transpose())).row(0).transpose();
}

}  // namespace pae
