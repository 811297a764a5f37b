#pragma once

// Dense numerical substrate shared by every other header: the Matrix/Vector
// aliases, a shaped Tensor, the seeded random source, SVD, ADAM and a
// central-difference gradient oracle.

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pae/error.hpp"

namespace pae {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

// Row-major array of doubles with an explicit shape. Used for image stacks
// and anything else that is not naturally a 2-D matrix; `as_matrix()` gives
// an Eigen view over (first dim) x (product of remaining dims).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (element_count(shape_) != data_.size()) {
            throw std::invalid_argument("Tensor: shape product does not match data length");
        }
    }

    [[nodiscard]] const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

    [[nodiscard]] std::span<double> data() noexcept { return data_; }
    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    [[nodiscard]] MatrixMap as_matrix() {
        auto [rows, cols] = matrix_dims();
        return {data_.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
    }
    [[nodiscard]] ConstMatrixMap as_matrix() const {
        auto [rows, cols] = matrix_dims();
        return {data_.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
    }

    [[nodiscard]] bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    bool operator==(const Tensor&) const = default;

    static std::size_t element_count(const std::vector<std::size_t>& shape) {
        if (shape.empty()) return 0;
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
    }

private:
    [[nodiscard]] std::pair<std::size_t, std::size_t> matrix_dims() const {
        if (shape_.empty()) return {0, 0};
        return {shape_[0], std::accumulate(shape_.begin() + 1, shape_.end(), std::size_t{1}, std::multiplies<>{})};
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

// Seeded random source: std::mt19937_64 seeded with the 64-bit seed, normals
// from std::normal_distribution, uniforms on [0,1) from
// std::uniform_real_distribution. Streams are bit-reproducible within one
// build; no cross-library guarantee is made.
//
// Not thread-safe. Parallel workers take `derive(i)`, whose seed is
// seed XOR (0x9E3779B97F4A7C15 * (i + 1)).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }

    // Uniform integer in [0, n).
    std::size_t uniform_index(std::size_t n) {
        if (n == 0) throw std::invalid_argument("Rng::uniform_index: n must be positive");
        std::uniform_int_distribution<std::size_t> dist(0, n - 1);
        return dist(engine_);
    }

    bool bernoulli(double p) { return uniform() < p; }

    [[nodiscard]] Rng derive(std::uint64_t index) const {
        return Rng(seed_ ^ (0x9E3779B97F4A7C15ULL * (index + 1)));
    }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

inline Tensor gaussian_sample(Rng& rng, std::vector<std::size_t> shape, double mean = 0.0,
                              double stddev = 1.0) {
    if (!(stddev >= 0.0)) throw std::invalid_argument("gaussian_sample: std must be >= 0");
    Tensor out(std::move(shape));
    for (auto& v : out.data()) v = mean + stddev * rng.normal();
    return out;
}

inline Matrix gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev = 1.0) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
    return m;
}

inline Vector gaussian_vector(Rng& rng, Eigen::Index n, double stddev = 1.0) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = stddev * rng.normal();
    return v;
}

// ---------------------------------------------------------------------------
// SVD
// ---------------------------------------------------------------------------

struct Svd {
    Matrix u;   // m x k, orthonormal columns
    Vector s;   // k, descending, >= 0
    Matrix vt;  // k x n, orthonormal rows
};

// Thin SVD, k = min(m, n). Backed by Eigen's divide-and-conquer SVD (which
// switches to one-sided Jacobi for small blocks). A backend that reports
// anything but success is surfaced as NumericalError.
inline Svd svd(const Eigen::Ref<const Matrix>& a) {
    if (!a.allFinite()) throw std::invalid_argument("svd: matrix has non-finite entries");
    if (a.size() == 0) return {Matrix(a.rows(), 0), Vector(0), Matrix(0, a.cols())};
    Eigen::BDCSVD<Eigen::MatrixXd> solver(Eigen::MatrixXd(a), Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("svd: decomposition did not converge");
    }
    return {solver.matrixU(), solver.singularValues(), solver.matrixV().transpose()};
}

inline double spectral_norm(const Eigen::Ref<const Matrix>& a) {
    if (a.size() == 0) return 0.0;
    return svd(a).s[0];
}

// ---------------------------------------------------------------------------
// ADAM
// ---------------------------------------------------------------------------

struct AdamState {
    Vector m;
    Vector v;
    std::size_t t = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    AdamState() = default;
    explicit AdamState(double learning_rate) : lr(learning_rate) {}
};

// One bias-corrected ADAM update of `param` in place. Moment buffers are
// allocated on the first call.
inline void adam_step(Eigen::Ref<Vector> param, const Eigen::Ref<const Vector>& grad, AdamState& st) {
    if (param.size() != grad.size()) {
        throw std::invalid_argument("adam_step: parameter/gradient size mismatch");
    }
    if (st.t == 0 && st.m.size() == 0) {
        st.m = Vector::Zero(param.size());
        st.v = Vector::Zero(param.size());
    }
    if (st.m.size() != param.size() || st.v.size() != param.size()) {
        throw std::invalid_argument("adam_step: state shape does not match parameter");
    }
    ++st.t;
    st.m = st.beta1 * st.m + (1.0 - st.beta1) * grad;
    st.v = st.beta2 * st.v + (1.0 - st.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
    param.array() -= st.lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + st.eps);
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

// Central-difference gradient of a scalar function. Test oracle for every
// hand-written backward pass.
template <typename F>
Vector finite_diff_grad(F&& f, const Vector& x, double h = 1e-5) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be positive");
    Vector probe = x;
    Vector g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double xi = probe[i];
        probe[i] = xi + h;
        const double fp = f(probe);
        probe[i] = xi - h;
        const double fm = f(probe);
        probe[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// ‖a − b‖₂ / max(‖a‖₂, ‖b‖₂), zero when both vanish.
inline double relative_difference(const Vector& a, const Vector& b) {
    const double scale = std::max(a.norm(), b.norm());
    if (scale == 0.0) return 0.0;
    return (a - b).norm() / scale;
}

}  // namespace pae
