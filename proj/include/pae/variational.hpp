#pragma once

// Variational building blocks: a Gaussian-encoder VAE with its ELBO, the
// variational paired autoencoder (four ELBO terms, maps acting on the
// concatenated (mu | log_std) head), sampling-based inference, and the
// variational latent map trained on top of a frozen paired model.
//
// Encoder heads are rows [mu | log_std]; the latent standard deviation is
// exp(log_std). Per-sample ELBO: |d(z) - t|^2 / (2 sigma) + KL(q || N(0, I)).

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "pae/error.hpp"
#include "pae/neuralnet.hpp"
#include "pae/numerics.hpp"
#include "pae/paired.hpp"

namespace pae {

struct VariationalAE {
    MlpNet encoder;  // dim -> 2 r
    MlpNet decoder;  // r -> dim
    double sigma = 1.0;

    [[nodiscard]] std::size_t latent_dim() const { return decoder.input_dim(); }
    [[nodiscard]] std::size_t data_dim() const { return encoder.input_dim(); }

    void validate() const {
        if (encoder.output_dim() != 2 * latent_dim()) {
            throw std::invalid_argument("VariationalAE: encoder must output 2 x latent dim (mu | log_std)");
        }
        if (decoder.output_dim() != data_dim()) throw std::invalid_argument("VariationalAE: decoder output dim mismatch");
        if (!(sigma > 0.0)) throw std::invalid_argument("VariationalAE: sigma must be positive");
    }
};

inline GaussianLatent split_head(const Vector& head) {
    const auto r = head.size() / 2;
    return {head.head(r), head.tail(r)};
}

namespace detail {

struct HeadTerm {
    double recon = 0.0;  // mean over batch of |d(z) - t|^2 / (2 sigma)
    double kl = 0.0;     // mean over batch
    Vector decoder_grad;
    Matrix head_grad;  // d/d[mu | log_std]
};

// One ELBO term for a batch of heads. `fixed_log_std` replaces the log_std half
// by a constant (no gradient flows to it).
inline HeadTerm head_term(const Matrix& head, const MlpNet& decoder, const Matrix& target, const Matrix& eps,
                          double sigma, bool with_grad, std::optional<double> fixed_log_std = std::nullopt) {
    const Eigen::Index r = head.cols() / 2;
    const double b = static_cast<double>(head.rows());
    const Matrix mu = head.leftCols(r);
    const Matrix s = fixed_log_std ? Matrix::Constant(head.rows(), r, *fixed_log_std) : Matrix(head.rightCols(r));
    if (eps.rows() != head.rows() || eps.cols() != r) throw std::invalid_argument("ELBO: noise shape mismatch");
    const Matrix z = reparameterize(mu, s, eps);
    Tape tape;
    const Matrix pred = decoder.forward(z, tape);
    HeadTerm out;
    out.recon = (pred - target).squaredNorm() / (2.0 * sigma * b);
    out.kl = kl_std_normal_rows(mu, s).sum() / b;
    if (!with_grad) return out;
    const Matrix dpred = (pred - target) / (sigma * b);
    NetGrad g = decoder.backward(tape, dpred);
    out.decoder_grad = std::move(g.params);
    const Matrix stdev = s.array().exp().matrix();
    out.head_grad.resize(head.rows(), head.cols());
    out.head_grad.leftCols(r) = g.input + mu / b;
    if (fixed_log_std) {
        out.head_grad.rightCols(r).setZero();
    } else {
        out.head_grad.rightCols(r) =
            g.input.cwiseProduct(stdev).cwiseProduct(eps) + ((2.0 * s.array()).exp() - 1.0).matrix() / b;
    }
    return out;
}

}  // namespace detail

struct ElboLoss {
    double value = 0.0;
    double recon = 0.0;
    double kl = 0.0;
    Vector grad;  // encoder params, then decoder params
};

// Batch-mean ELBO objective with caller-supplied noise (B x r).
inline ElboLoss elbo_loss(const VariationalAE& vae, const Matrix& x, const Matrix& eps, bool with_grad = true) {
    vae.validate();
    if (x.rows() == 0) throw std::invalid_argument("elbo_loss: empty batch");
    Tape te;
    const Matrix head = vae.encoder.forward(x, te);
    auto t = detail::head_term(head, vae.decoder, x, eps, vae.sigma, with_grad);
    ElboLoss out{t.recon + t.kl, t.recon, t.kl, {}};
    if (with_grad) {
        Vector ge = vae.encoder.backward(te, t.head_grad).params;
        out.grad.resize(ge.size() + t.decoder_grad.size());
        out.grad << ge, t.decoder_grad;
    }
    return out;
}

inline ElboLoss elbo_loss(const VariationalAE& vae, const Matrix& x, Rng& rng, bool with_grad = true) {
    const Matrix eps = gaussian_matrix(rng, x.rows(), static_cast<Eigen::Index>(vae.latent_dim()));
    return elbo_loss(vae, x, eps, with_grad);
}

// ---------------------------------------------------------------------------
// Variational paired autoencoder
// ---------------------------------------------------------------------------

struct VpaeModel {
    VariationalAE vx;
    VariationalAE vy;
    MlpNet map;      // [mu_x | s_x] (2 r_x) -> [mu_y | s_y] (2 r_y)
    MlpNet map_inv;  // [mu_y | s_y] (2 r_y) -> [mu_x | s_x] (2 r_x)

    static constexpr std::size_t kParts = 6;

    [[nodiscard]] std::array<const MlpNet*, kParts> parts() const {
        return {&vx.encoder, &vx.decoder, &vy.encoder, &vy.decoder, &map, &map_inv};
    }
    [[nodiscard]] std::array<MlpNet*, kParts> parts() {
        return {&vx.encoder, &vx.decoder, &vy.encoder, &vy.decoder, &map, &map_inv};
    }
    static const std::array<const char*, kParts>& part_names() {
        static const std::array<const char*, kParts> names{"enc_x", "dec_x", "enc_y", "dec_y", "map", "map_inv"};
        return names;
    }

    void validate() const {
        vx.validate();
        vy.validate();
        if (map.input_dim() != 2 * vx.latent_dim() || map.output_dim() != 2 * vy.latent_dim()) {
            throw std::invalid_argument("VpaeModel: M must map 2 r_x -> 2 r_y");
        }
        if (map_inv.input_dim() != 2 * vy.latent_dim() || map_inv.output_dim() != 2 * vx.latent_dim()) {
            throw std::invalid_argument("VpaeModel: M_inv must map 2 r_y -> 2 r_x");
        }
    }

    [[nodiscard]] std::array<Eigen::Index, kParts + 1> offsets() const {
        std::array<Eigen::Index, kParts + 1> off{};
        auto ps = parts();
        for (std::size_t i = 0; i < kParts; ++i) off[i + 1] = off[i] + static_cast<Eigen::Index>(ps[i]->num_params());
        return off;
    }
    [[nodiscard]] std::size_t num_params() const { return static_cast<std::size_t>(offsets().back()); }

    [[nodiscard]] Vector params() const {
        auto off = offsets();
        Vector out(off.back());
        auto ps = parts();
        for (std::size_t i = 0; i < kParts; ++i) out.segment(off[i], off[i + 1] - off[i]) = ps[i]->params();
        return out;
    }

    void set_params(const Eigen::Ref<const Vector>& p) {
        auto off = offsets();
        if (p.size() != off.back()) throw std::invalid_argument("VpaeModel::set_params: size mismatch");
        auto ps = parts();
        for (std::size_t i = 0; i < kParts; ++i) {
            if (off[i + 1] > off[i]) ps[i]->set_params(p.segment(off[i], off[i + 1] - off[i]));
        }
    }
};

// Encoders dim -> hidden... -> 2 r; decoders mirrored with `spec.output`;
// maps are single bias-free matrices on the concatenated head.
inline VpaeModel make_vpae(std::size_t dim_x, std::size_t dim_y, const ModelSpec& spec, Rng& rng, double sigma = 1.0) {
    auto encoder = [&](std::size_t dim, std::size_t latent) {
        std::vector<std::size_t> w{dim};
        w.insert(w.end(), spec.hidden.begin(), spec.hidden.end());
        w.push_back(2 * latent);
        return MlpNet::dense(w, spec.activation, Activation::identity, rng);
    };
    auto decoder = [&](std::size_t latent, std::size_t dim) {
        std::vector<std::size_t> w{latent};
        w.insert(w.end(), spec.hidden.rbegin(), spec.hidden.rend());
        w.push_back(dim);
        return MlpNet::dense(w, spec.activation, spec.output, rng);
    };
    VpaeModel m;
    m.vx = {encoder(dim_x, spec.latent_x), decoder(spec.latent_x, dim_x), sigma};
    m.vy = {encoder(dim_y, spec.latent_y), decoder(spec.latent_y, dim_y), sigma};
    m.map = MlpNet({{2 * spec.latent_x, 2 * spec.latent_y, Activation::identity, false}}, rng);
    m.map_inv = MlpNet({{2 * spec.latent_y, 2 * spec.latent_x, Activation::identity, false}}, rng);
    m.validate();
    return m;
}

namespace detail {

// Appends a constant `log_std` block to a deterministic encoder's output.
inline MlpNet with_constant_log_std(const MlpNet& enc, double log_std) {
    const auto r = static_cast<Eigen::Index>(enc.output_dim());
    if (enc.is_identity()) {
        Rng dummy(0);
        MlpNet net({{enc.input_dim(), 2 * enc.output_dim(), Activation::identity, true}}, dummy);
        Matrix w = Matrix::Zero(2 * r, r);
        w.topRows(r).setIdentity();
        Vector b = Vector::Zero(2 * r);
        b.tail(r).setConstant(log_std);
        net.set_weight(0, w);
        net.set_bias(0, b);
        return net;
    }
    std::vector<LayerSpec> specs = enc.layers();
    const std::size_t last = specs.size() - 1;
    if (specs[last].activation != Activation::identity) {
        throw std::invalid_argument("from_paired: encoder output layer must be affine");
    }
    specs[last].out_dim *= 2;
    specs[last].bias = true;
    Rng dummy(0);
    MlpNet net(specs, dummy);
    for (std::size_t l = 0; l < last; ++l) {
        net.set_weight(l, enc.weight(l));
        if (specs[l].bias) net.set_bias(l, enc.bias(l));
    }
    Matrix w = Matrix::Zero(2 * r, enc.weight(last).cols());
    w.topRows(r) = enc.weight(last);
    Vector b = Vector::Zero(2 * r);
    if (enc.layers()[last].bias) b.head(r) = enc.bias(last);
    b.tail(r).setConstant(log_std);
    net.set_weight(last, w);
    net.set_bias(last, b);
    return net;
}

// [[M, 0], [0, B]] with B = ones / r_in, so a constant log_std block maps to
// the same constant.
inline MlpNet head_map_from(const MlpNet& map) {
    const Matrix m = map.as_matrix();
    const Eigen::Index ro = m.rows(), ri = m.cols();
    Matrix w = Matrix::Zero(2 * ro, 2 * ri);
    w.topLeftCorner(ro, ri) = m;
    w.bottomRightCorner(ro, ri).setConstant(1.0 / static_cast<double>(ri));
    return MlpNet::linear(std::move(w));
}

}  // namespace detail

// Embeds a deterministic paired model (linear or identity latent maps) as a
// VPAE whose encoders report log_std == `log_std` everywhere. With a very
// negative log_std the VPAE degenerates to the paired model.
inline VpaeModel vpae_from_paired(const PairedModel& model, double log_std = -50.0, double sigma = 1.0) {
    if (!model.map.is_linear() || !model.map_inv.is_linear()) {
        throw std::invalid_argument("vpae_from_paired: latent maps must be linear");
    }
    VpaeModel v;
    v.vx = {detail::with_constant_log_std(model.enc_x, log_std), model.dec_x, sigma};
    v.vy = {detail::with_constant_log_std(model.enc_y, log_std), model.dec_y, sigma};
    v.map = detail::head_map_from(model.map);
    v.map_inv = detail::head_map_from(model.map_inv);
    v.validate();
    return v;
}

// Which of the four ELBO terms are active, indexed by reconstruction target:
// x autoencoder, y autoencoder, forward (M e_x decoded by d_y against y),
// inverse (M_inv e_y decoded by d_x against x).
using VpaeTerms = std::array<bool, 4>;
inline constexpr VpaeTerms kAllVpaeTerms{true, true, true, true};

struct VpaeNoise {
    Matrix x, y, y_hat, x_hat;  // B x r_x, B x r_y, B x r_y, B x r_x

    static VpaeNoise sample(Rng& rng, Eigen::Index batch, std::size_t rx, std::size_t ry) {
        const auto ix = static_cast<Eigen::Index>(rx), iy = static_cast<Eigen::Index>(ry);
        VpaeNoise n;
        n.x = gaussian_matrix(rng, batch, ix);
        n.y = gaussian_matrix(rng, batch, iy);
        n.y_hat = gaussian_matrix(rng, batch, iy);
        n.x_hat = gaussian_matrix(rng, batch, ix);
        return n;
    }
};

struct VpaeLoss {
    double value = 0.0;
    std::array<double, 4> recon{};
    std::array<double, 4> kl{};
    Vector grad;  // VpaeModel::params() layout
};

inline VpaeLoss vpae_loss(const VpaeModel& m, const Matrix& x, const Matrix& y, const VpaeNoise& noise,
                          const VpaeTerms& terms = kAllVpaeTerms, bool with_grad = true) {
    m.validate();
    if (x.rows() == 0 || x.rows() != y.rows()) throw std::invalid_argument("vpae_loss: need aligned, nonempty batches");
    const auto off = m.offsets();
    VpaeLoss out;
    if (with_grad) out.grad = Vector::Zero(off.back());

    Tape tex, tey;
    const Matrix hx = m.vx.encoder.forward(x, tex);
    const Matrix hy = m.vy.encoder.forward(y, tey);
    Matrix ghx = Matrix::Zero(hx.rows(), hx.cols());
    Matrix ghy = Matrix::Zero(hy.rows(), hy.cols());

    auto record = [&](std::size_t i, const detail::HeadTerm& t) {
        out.recon[i] = t.recon;
        out.kl[i] = t.kl;
        out.value += t.recon + t.kl;
    };

    if (terms[0]) {
        auto t = detail::head_term(hx, m.vx.decoder, x, noise.x, m.vx.sigma, with_grad);
        record(0, t);
        if (with_grad) {
            detail::accumulate(out.grad, off[1], t.decoder_grad);
            ghx += t.head_grad;
        }
    }
    if (terms[1]) {
        auto t = detail::head_term(hy, m.vy.decoder, y, noise.y, m.vy.sigma, with_grad);
        record(1, t);
        if (with_grad) {
            detail::accumulate(out.grad, off[3], t.decoder_grad);
            ghy += t.head_grad;
        }
    }
    if (terms[2]) {
        Tape tm;
        const Matrix hy_hat = m.map.forward(hx, tm);
        auto t = detail::head_term(hy_hat, m.vy.decoder, y, noise.y_hat, m.vy.sigma, with_grad);
        record(2, t);
        if (with_grad) {
            detail::accumulate(out.grad, off[3], t.decoder_grad);
            auto g = m.map.backward(tm, t.head_grad);
            detail::accumulate(out.grad, off[4], g.params);
            ghx += g.input;
        }
    }
    if (terms[3]) {
        Tape tm;
        const Matrix hx_hat = m.map_inv.forward(hy, tm);
        auto t = detail::head_term(hx_hat, m.vx.decoder, x, noise.x_hat, m.vx.sigma, with_grad);
        record(3, t);
        if (with_grad) {
            detail::accumulate(out.grad, off[1], t.decoder_grad);
            auto g = m.map_inv.backward(tm, t.head_grad);
            detail::accumulate(out.grad, off[5], g.params);
            ghy += g.input;
        }
    }
    if (with_grad) {
        detail::accumulate(out.grad, off[0], m.vx.encoder.backward(tex, ghx).params);
        detail::accumulate(out.grad, off[2], m.vy.encoder.backward(tey, ghy).params);
    }
    return out;
}

// One reparameterized draw per term, noise drawn in the order x, y, y_hat, x_hat.
inline VpaeLoss vpae_loss(const VpaeModel& m, const Matrix& x, const Matrix& y, Rng& rng,
                          const VpaeTerms& terms = kAllVpaeTerms, bool with_grad = true) {
    auto noise = VpaeNoise::sample(rng, x.rows(), m.vx.latent_dim(), m.vy.latent_dim());
    return vpae_loss(m, x, y, noise, terms, with_grad);
}

struct VpaeTrainResult {
    VpaeModel model;
    std::vector<double> history;  // [0]: initial full-data objective; then epoch means
};

inline VpaeTrainResult train_vpae(VpaeModel model, const Matrix& x, const Matrix& y, const TrainConfig& cfg,
                                  const EpochCallback& on_epoch = {}) {
    model.validate();
    if (cfg.batch_size == 0 || !(cfg.lr >= 0.0)) throw std::invalid_argument("train_vpae: invalid config");
    if (x.rows() == 0 || x.rows() != y.rows()) throw std::invalid_argument("train_vpae: need aligned, nonempty data");
    Rng shuffle_rng(cfg.seed);
    Rng noise_rng = shuffle_rng.derive(1);
    VpaeTrainResult result;
    {
        Rng eval_rng = shuffle_rng.derive(2);
        const double initial = vpae_loss(model, x, y, eval_rng, kAllVpaeTerms, false).value;
        if (!std::isfinite(initial)) throw DivergenceError("training diverged: non-finite initial loss", 0);
        result.history.push_back(initial);
    }
    Vector params = model.params();
    auto step = [&](const Vector& p, const std::vector<Eigen::Index>& rows, Vector& grad) {
        model.set_params(p);
        Matrix bx = x(rows, Eigen::all);
        Matrix by = y(rows, Eigen::all);
        auto loss = vpae_loss(model, bx, by, noise_rng);
        grad = std::move(loss.grad);
        return loss.value;
    };
    auto h = detail::run_epochs(params, static_cast<std::size_t>(x.rows()), cfg.epochs, cfg.batch_size, cfg.lr,
                                shuffle_rng, step, on_epoch);
    result.history.insert(result.history.end(), h.begin(), h.end());
    model.set_params(params);
    result.model = std::move(model);
    return result;
}

// Mapped head (mu_hat_x | s_hat_x) = M_inv(e_y(y)) for each row of y.
inline Matrix vpae_mapped_heads(const VpaeModel& m, const Matrix& y) {
    return m.map_inv.forward(m.vy.encoder.forward(y));
}

// Decoded mapped mean d_x(mu_hat_x), row-wise.
inline Matrix vpae_direct_estimate(const VpaeModel& m, const Matrix& y) {
    const Matrix h = vpae_mapped_heads(m, y);
    return m.vx.decoder.forward(h.leftCols(static_cast<Eigen::Index>(m.vx.latent_dim())));
}

// Encode and map once, then draw `n` latents z ~ N(mu_hat_x, exp(s_hat_x)^2)
// and decode each. Returns n x dim_x.
inline Matrix vpae_sample_inference(const VpaeModel& m, const Vector& y, std::size_t n, Rng& rng) {
    if (n == 0) throw std::invalid_argument("vpae_sample_inference: n must be >= 1");
    const Vector head = vpae_mapped_heads(m, Matrix(y.transpose())).row(0).transpose();
    const auto g = split_head(head);
    const auto r = static_cast<Eigen::Index>(g.mu.size());
    Matrix z(static_cast<Eigen::Index>(n), r);
    for (Eigen::Index i = 0; i < z.rows(); ++i) z.row(i) = reparameterize(g, rng).transpose();
    return m.vx.decoder.forward(z);
}

// ---------------------------------------------------------------------------
// Sample statistics
// ---------------------------------------------------------------------------

struct SampleStats {
    Vector mean;
    Vector stddev;  // (n - 1) denominator
    std::size_t n = 0;
};

inline SampleStats pixel_stats(const Matrix& samples) {
    if (samples.rows() < 2) throw std::invalid_argument("pixel_stats: need at least two samples");
    SampleStats st;
    st.n = static_cast<std::size_t>(samples.rows());
    st.mean = samples.colwise().mean().transpose();
    const Matrix centered = samples.rowwise() - st.mean.transpose();
    st.stddev = (centered.colwise().squaredNorm().transpose() / static_cast<double>(st.n - 1)).cwiseSqrt();
    return st;
}

// ---------------------------------------------------------------------------
// Variational latent map
// ---------------------------------------------------------------------------

// M_inv replaced by a VAE-like pair: z_y -> (mu | log_std) over r_y latent
// coordinates (no compression), sample, decode to z_x.
struct VariationalLatentMap {
    MlpNet encoder;  // r_y -> 2 r_y
    MlpNet decoder;  // r_y -> r_x
    double sigma = 1.0;
    // When set, the head's log_std half is replaced by this constant.
    std::optional<double> fixed_log_std;

    [[nodiscard]] std::size_t latent_dim() const { return decoder.input_dim(); }

    void validate() const {
        if (encoder.output_dim() != 2 * latent_dim()) throw std::invalid_argument("VariationalLatentMap: head dims");
        if (!(sigma > 0.0)) throw std::invalid_argument("VariationalLatentMap: sigma must be positive");
    }

    [[nodiscard]] Vector params() const {
        Vector a = encoder.params(), b = decoder.params();
        Vector out(a.size() + b.size());
        out << a, b;
        return out;
    }
    void set_params(const Eigen::Ref<const Vector>& p) {
        const auto ne = static_cast<Eigen::Index>(encoder.num_params());
        if (p.size() != ne + static_cast<Eigen::Index>(decoder.num_params())) {
            throw std::invalid_argument("VariationalLatentMap::set_params: size mismatch");
        }
        encoder.set_params(p.head(ne));
        decoder.set_params(p.tail(p.size() - ne));
    }
};

struct LatentMapConfig {
    std::size_t hidden = 128;  // 0: single affine layer each side
    double lr = 1e-3;
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    double sigma = 1.0;
    std::optional<double> fixed_log_std;
};

// Two-layer linear encoder/decoder (affine layers, identity activations).
inline VariationalLatentMap make_latent_map(std::size_t r_y, std::size_t r_x, const LatentMapConfig& cfg, Rng& rng) {
    auto stack = [&](std::size_t in, std::size_t out) {
        if (cfg.hidden == 0) return MlpNet({{in, out, Activation::identity, true}}, rng);
        return MlpNet::dense({in, cfg.hidden, out}, Activation::identity, Activation::identity, rng);
    };
    VariationalLatentMap m{stack(r_y, 2 * r_y), stack(r_y, r_x), cfg.sigma, cfg.fixed_log_std};
    m.validate();
    return m;
}

struct LatentMapLoss {
    double value = 0.0;
    double recon = 0.0;
    double kl = 0.0;
    Vector grad;
};

inline LatentMapLoss latent_map_loss(const VariationalLatentMap& map, const Matrix& zy, const Matrix& zx,
                                     const Matrix& eps, bool with_grad = true) {
    Tape te;
    const Matrix head = map.encoder.forward(zy, te);
    auto t = detail::head_term(head, map.decoder, zx, eps, map.sigma, with_grad, map.fixed_log_std);
    LatentMapLoss out{t.recon + t.kl, t.recon, t.kl, {}};
    if (with_grad) {
        Vector ge = map.encoder.backward(te, t.head_grad).params;
        out.grad.resize(ge.size() + t.decoder_grad.size());
        out.grad << ge, t.decoder_grad;
    }
    return out;
}

struct LatentMapTrainResult {
    VariationalLatentMap map;
    std::vector<double> history;
};

// Trains on latent pairs (z_y, z_x) as rows.
inline LatentMapTrainResult train_variational_latent_map(const Matrix& zy, const Matrix& zx,
                                                         const LatentMapConfig& cfg,
                                                         const EpochCallback& on_epoch = {}) {
    if (zy.rows() == 0 || zy.rows() != zx.rows()) throw std::invalid_argument("train_variational_latent_map: bad data");
    if (cfg.batch_size == 0 || !(cfg.lr >= 0.0)) throw std::invalid_argument("train_variational_latent_map: bad config");
    Rng init_rng(cfg.seed);
    Rng shuffle_rng = init_rng.derive(1);
    Rng noise_rng = init_rng.derive(2);
    LatentMapTrainResult result;
    result.map = make_latent_map(static_cast<std::size_t>(zy.cols()), static_cast<std::size_t>(zx.cols()), cfg, init_rng);
    auto& map = result.map;
    const auto r = static_cast<Eigen::Index>(map.latent_dim());
    {
        Rng eval_rng = init_rng.derive(3);
        const double initial = latent_map_loss(map, zy, zx, gaussian_matrix(eval_rng, zy.rows(), r), false).value;
        if (!std::isfinite(initial)) throw DivergenceError("latent map training diverged", 0);
        result.history.push_back(initial);
    }
    Vector params = map.params();
    auto step = [&](const Vector& p, const std::vector<Eigen::Index>& rows, Vector& grad) {
        map.set_params(p);
        const Matrix by = zy(rows, Eigen::all);
        const Matrix bx = zx(rows, Eigen::all);
        auto loss = latent_map_loss(map, by, bx, gaussian_matrix(noise_rng, by.rows(), r));
        grad = std::move(loss.grad);
        return loss.value;
    };
    auto h = detail::run_epochs(params, static_cast<std::size_t>(zy.rows()), cfg.epochs, cfg.batch_size, cfg.lr,
                                shuffle_rng, step, on_epoch);
    result.history.insert(result.history.end(), h.begin(), h.end());
    map.set_params(params);
    return result;
}

// Latent pairs come from the frozen paired model's encoders.
inline LatentMapTrainResult train_variational_latent_map(const PairedModel& frozen, const Matrix& x, const Matrix& y,
                                                         const LatentMapConfig& cfg,
                                                         const EpochCallback& on_epoch = {}) {
    return train_variational_latent_map(frozen.enc_y.forward(y), frozen.enc_x.forward(x), cfg, on_epoch);
}

// n draws z_x = d(z), z ~ N(head(z_y)). Returns n x r_x.
inline Matrix latent_map_sample(const VariationalLatentMap& map, const Vector& zy, std::size_t n, Rng& rng) {
    if (n == 0) throw std::invalid_argument("latent_map_sample: n must be >= 1");
    const Vector head = map.encoder.forward(Matrix(zy.transpose())).row(0).transpose();
    GaussianLatent g = split_head(head);
    if (map.fixed_log_std) g.log_std.setConstant(*map.fixed_log_std);
    Matrix z(static_cast<Eigen::Index>(n), g.mu.size());
    for (Eigen::Index i = 0; i < z.rows(); ++i) z.row(i) = reparameterize(g, rng).transpose();
    return map.decoder.forward(z);
}

// Decoded head mean, row-wise.
inline Matrix latent_map_mean(const VariationalLatentMap& map, const Matrix& zy) {
    const Matrix head = map.encoder.forward(zy);
    return map.decoder.forward(head.leftCols(static_cast<Eigen::Index>(map.latent_dim())));
}

// x-space samples d_x(M_inv(e_y(y))) through the variational latent map.
inline Matrix latent_map_x_samples(const PairedModel& model, const VariationalLatentMap& map, const Vector& y,
                                   std::size_t n, Rng& rng) {
    const Vector zy = model.enc_y.forward(Matrix(y.transpose())).row(0).transpose();
    return model.dec_x.forward(latent_map_sample(map, zy, n, rng));
}

}  // namespace pae
