#pragma once

// Dense multilayer networks with a hand-written reverse pass, plus the
// Gaussian-latent helpers (reparameterization, KL to N(0, I)) used by the
// variational models.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pae/numerics.hpp"

namespace pae {

enum class Activation { identity, relu, silu, sigmoid };

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::silu: return "silu";
        case Activation::sigmoid: return "sigmoid";
    }
    return "identity";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "identity" || s == "linear") return Activation::identity;
    if (s == "relu") return Activation::relu;
    if (s == "silu") return Activation::silu;
    if (s == "sigmoid") return Activation::sigmoid;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

struct LayerSpec {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    Activation activation = Activation::identity;
    bool bias = true;

    bool operator==(const LayerSpec&) const = default;
};

namespace detail {

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

inline void activate(Activation a, const Matrix& pre, Matrix& out) {
    switch (a) {
        case Activation::identity: out = pre; break;
        case Activation::relu: out = pre.cwiseMax(0.0); break;
        case Activation::silu: out = pre.unaryExpr([](double v) { return v * sigmoid(v); }); break;
        case Activation::sigmoid: out = pre.unaryExpr([](double v) { return sigmoid(v); }); break;
    }
}

// Multiplies `grad` in place by the activation derivative at `pre`.
inline void activation_backward(Activation a, const Matrix& pre, Matrix& grad) {
    switch (a) {
        case Activation::identity: break;
        case Activation::relu: grad = grad.cwiseProduct(pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; })); break;
        case Activation::silu:
            grad = grad.cwiseProduct(pre.unaryExpr([](double v) {
                const double s = sigmoid(v);
                return s * (1.0 + v * (1.0 - s));
            }));
            break;
        case Activation::sigmoid:
            grad = grad.cwiseProduct(pre.unaryExpr([](double v) {
                const double s = sigmoid(v);
                return s * (1.0 - s);
            }));
            break;
    }
}

inline std::uint64_t next_generation() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace detail

// Activations recorded by a forward pass. Only valid for the network state
// (generation) that produced it.
struct Tape {
    std::uint64_t generation = 0;
    std::vector<Matrix> inputs;  // input to each layer
    std::vector<Matrix> pre;     // pre-activation of each layer
};

struct NetGrad {
    Vector params;  // same layout as MlpNet::params()
    Matrix input;   // gradient w.r.t. the batch fed to forward
};

// Feed-forward network acting on row batches (B x in -> B x out). A network
// with no layers is the identity on `input_dim()`.
class MlpNet {
public:
    MlpNet() = default;

    static MlpNet identity(std::size_t dim) {
        MlpNet net;
        net.identity_dim_ = dim;
        return net;
    }

    // Weights uniform in +-sqrt(6 / (in + out)), biases zero.
    MlpNet(std::vector<LayerSpec> specs, Rng& rng) : specs_(std::move(specs)) {
        if (specs_.empty()) throw std::invalid_argument("MlpNet: at least one layer required");
        for (std::size_t l = 0; l < specs_.size(); ++l) {
            const auto& s = specs_[l];
            if (s.in_dim == 0 || s.out_dim == 0) throw std::invalid_argument("MlpNet: layer dims must be positive");
            if (l > 0 && specs_[l - 1].out_dim != s.in_dim) {
                throw std::invalid_argument("MlpNet: consecutive layer dims do not chain");
            }
            const double limit = std::sqrt(6.0 / static_cast<double>(s.in_dim + s.out_dim));
            Matrix w(s.out_dim, s.in_dim);
            for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = limit * (2.0 * rng.uniform() - 1.0);
            weights_.push_back(std::move(w));
            biases_.push_back(s.bias ? Vector::Zero(static_cast<Eigen::Index>(s.out_dim)) : Vector());
        }
        identity_dim_ = specs_.front().in_dim;
        touch();
    }

    // Widths [in, h1, ..., out]; hidden layers use `hidden`, the last layer `output`.
    static MlpNet dense(const std::vector<std::size_t>& widths, Activation hidden, Activation output, Rng& rng,
                        bool bias = true) {
        if (widths.size() < 2) throw std::invalid_argument("MlpNet::dense: need at least input and output width");
        std::vector<LayerSpec> specs;
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            const bool last = l + 2 == widths.size();
            specs.push_back({widths[l], widths[l + 1], last ? output : hidden, bias});
        }
        return MlpNet(std::move(specs), rng);
    }

    // Single bias-free identity-activation layer computing x -> W x.
    static MlpNet linear(Matrix weight) {
        if (weight.rows() == 0 || weight.cols() == 0) throw std::invalid_argument("MlpNet::linear: empty weight");
        MlpNet net;
        net.specs_.push_back({static_cast<std::size_t>(weight.cols()), static_cast<std::size_t>(weight.rows()),
                              Activation::identity, false});
        net.weights_.push_back(std::move(weight));
        net.biases_.emplace_back();
        net.identity_dim_ = net.specs_.front().in_dim;
        net.touch();
        return net;
    }

    [[nodiscard]] bool is_identity() const noexcept { return specs_.empty(); }
    [[nodiscard]] std::size_t input_dim() const noexcept { return specs_.empty() ? identity_dim_ : specs_.front().in_dim; }
    [[nodiscard]] std::size_t output_dim() const noexcept { return specs_.empty() ? identity_dim_ : specs_.back().out_dim; }
    [[nodiscard]] const std::vector<LayerSpec>& layers() const noexcept { return specs_; }
    [[nodiscard]] std::uint64_t generation() const noexcept { return generation_; }

    [[nodiscard]] const Matrix& weight(std::size_t l) const { return weights_.at(l); }
    [[nodiscard]] const Vector& bias(std::size_t l) const { return biases_.at(l); }

    void set_weight(std::size_t l, Matrix w) {
        if (w.rows() != weights_.at(l).rows() || w.cols() != weights_.at(l).cols()) {
            throw std::invalid_argument("MlpNet::set_weight: shape mismatch");
        }
        weights_[l] = std::move(w);
        touch();
    }
    void set_bias(std::size_t l, Vector b) {
        if (b.size() != biases_.at(l).size()) throw std::invalid_argument("MlpNet::set_bias: shape mismatch");
        biases_[l] = std::move(b);
        touch();
    }

    // True for a bias-free stack of identity-activation layers (or identity).
    [[nodiscard]] bool is_linear() const {
        for (const auto& s : specs_) {
            if (s.bias || s.activation != Activation::identity) return false;
        }
        return true;
    }

    // Matrix of a linear network (product of its layer weights).
    [[nodiscard]] Matrix as_matrix() const {
        if (!is_linear()) throw std::logic_error("MlpNet::as_matrix: network is not linear");
        Matrix m = Matrix::Identity(static_cast<Eigen::Index>(input_dim()), static_cast<Eigen::Index>(input_dim()));
        for (const auto& w : weights_) m = w * m;
        return m;
    }

    [[nodiscard]] std::size_t num_params() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < specs_.size(); ++l) {
            n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
        }
        return n;
    }

    [[nodiscard]] Vector params() const {
        Vector out(static_cast<Eigen::Index>(num_params()));
        Eigen::Index k = 0;
        for (std::size_t l = 0; l < specs_.size(); ++l) {
            out.segment(k, weights_[l].size()) = Eigen::Map<const Vector>(weights_[l].data(), weights_[l].size());
            k += weights_[l].size();
            out.segment(k, biases_[l].size()) = biases_[l];
            k += biases_[l].size();
        }
        return out;
    }

    void set_params(const Eigen::Ref<const Vector>& p) {
        if (static_cast<std::size_t>(p.size()) != num_params()) {
            throw std::invalid_argument("MlpNet::set_params: size mismatch");
        }
        Eigen::Index k = 0;
        for (std::size_t l = 0; l < specs_.size(); ++l) {
            Eigen::Map<Vector>(weights_[l].data(), weights_[l].size()) = p.segment(k, weights_[l].size());
            k += weights_[l].size();
            biases_[l] = p.segment(k, biases_[l].size());
            k += biases_[l].size();
        }
        touch();
    }

    [[nodiscard]] Matrix forward(const Matrix& batch) const {
        check_input(batch);
        Matrix x = batch;
        Matrix out;
        for (std::size_t l = 0; l < specs_.size(); ++l) {
            Matrix pre = x * weights_[l].transpose();
            if (specs_[l].bias) pre.rowwise() += biases_[l].transpose();
            detail::activate(specs_[l].activation, pre, out);
            x.swap(out);
        }
        return x;
    }

    [[nodiscard]] Matrix forward(const Matrix& batch, Tape& tape) const {
        check_input(batch);
        tape.generation = generation_;
        tape.inputs.clear();
        tape.pre.clear();
        Matrix x = batch;
        Matrix out;
        for (std::size_t l = 0; l < specs_.size(); ++l) {
            Matrix pre = x * weights_[l].transpose();
            if (specs_[l].bias) pre.rowwise() += biases_[l].transpose();
            detail::activate(specs_[l].activation, pre, out);
            tape.inputs.push_back(std::move(x));
            tape.pre.push_back(std::move(pre));
            x.swap(out);
        }
        return x;
    }

    // Reverse pass for a scalar loss whose gradient w.r.t. the output is `out_grad`.
    [[nodiscard]] NetGrad backward(const Tape& tape, const Matrix& out_grad) const {
        if (tape.generation != generation_ || tape.pre.size() != specs_.size()) {
            throw std::invalid_argument("MlpNet::backward: stale tape (network changed since forward)");
        }
        if (static_cast<std::size_t>(out_grad.cols()) != output_dim()) {
            throw std::invalid_argument("MlpNet::backward: output gradient has wrong width");
        }
        NetGrad g;
        g.params.resize(static_cast<Eigen::Index>(num_params()));
        Matrix delta = out_grad;
        // Parameter offsets per layer, filled back to front.
        std::vector<Eigen::Index> offset(specs_.size() + 1, 0);
        for (std::size_t l = 0; l < specs_.size(); ++l) {
            offset[l + 1] = offset[l] + weights_[l].size() + biases_[l].size();
        }
        for (std::size_t l = specs_.size(); l-- > 0;) {
            if (tape.pre[l].rows() != delta.rows()) {
                throw std::invalid_argument("MlpNet::backward: batch size differs from tape");
            }
            detail::activation_backward(specs_[l].activation, tape.pre[l], delta);
            Matrix dw = delta.transpose() * tape.inputs[l];
            g.params.segment(offset[l], dw.size()) = Eigen::Map<const Vector>(dw.data(), dw.size());
            if (specs_[l].bias) {
                g.params.segment(offset[l] + dw.size(), biases_[l].size()) = delta.colwise().sum().transpose();
            }
            delta = delta * weights_[l];
        }
        g.input = std::move(delta);
        return g;
    }

private:
    void check_input(const Matrix& batch) const {
        if (static_cast<std::size_t>(batch.cols()) != input_dim()) {
            throw std::invalid_argument("MlpNet::forward: batch width " + std::to_string(batch.cols()) +
                                        " does not match input dim " + std::to_string(input_dim()));
        }
    }

    void touch() { generation_ = detail::next_generation(); }

    std::vector<LayerSpec> specs_;
    std::vector<Matrix> weights_;  // out x in
    std::vector<Vector> biases_;   // empty when the layer has no bias
    std::size_t identity_dim_ = 0;
    std::uint64_t generation_ = 0;
};

// ---------------------------------------------------------------------------
// Gaussian latents
// ---------------------------------------------------------------------------

// Diagonal Gaussian N(mu, diag(exp(log_std))^2).
struct GaussianLatent {
    Vector mu;
    Vector log_std;
};

// z = mu + exp(log_std) * eps.
inline Matrix reparameterize(const Matrix& mu, const Matrix& log_std, const Matrix& eps) {
    return mu + log_std.array().exp().matrix().cwiseProduct(eps);
}

inline Vector reparameterize(const GaussianLatent& g, Rng& rng) {
    if (g.mu.size() != g.log_std.size()) throw std::invalid_argument("reparameterize: mu/log_std length mismatch");
    Vector eps = gaussian_vector(rng, g.mu.size());
    return g.mu + g.log_std.array().exp().matrix().cwiseProduct(eps);
}

// KL(N(mu, exp(log_std)^2) || N(0, I)) = 1/2 sum(mu^2 + exp(2 s) - 1 - 2 s).
inline double kl_std_normal(const GaussianLatent& g) {
    if (g.mu.size() != g.log_std.size()) throw std::invalid_argument("kl_std_normal: mu/log_std length mismatch");
    const auto s = g.log_std.array();
    return 0.5 * (g.mu.array().square() + (2.0 * s).exp() - 1.0 - 2.0 * s).sum();
}

// Row-wise KL for a batch of Gaussians.
inline Vector kl_std_normal_rows(const Matrix& mu, const Matrix& log_std) {
    const auto s = log_std.array();
    return 0.5 * (mu.array().square() + (2.0 * s).exp() - 1.0 - 2.0 * s).rowwise().sum().matrix();
}

template <typename A, typename B>
double mse(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("mse: shape mismatch");
    if (a.size() == 0) return 0.0;
    return (a - b).squaredNorm() / static_cast<double>(a.size());
}

inline double mse(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw std::invalid_argument("mse: shape mismatch");
    if (a.size() == 0) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return acc / static_cast<double>(a.size());
}

}  // namespace pae
