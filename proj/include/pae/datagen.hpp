#pragma once

// Image sets and the corruption processes that turn clean images x into
// observations y: IDX ingestion, a procedural shapes corpus, Bernoulli pixel
// deletion, block deletion and SNR-calibrated Gaussian noise.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "pae/error.hpp"
#include "pae/numerics.hpp"

namespace pae {

// N images of H x W pixels in [0, 1], stored as a Tensor[N x H x W].
class ImageSet {
public:
    ImageSet() = default;

    ImageSet(std::size_t count, std::size_t height, std::size_t width, double fill = 0.0)
        : pixels_({count, height, width}, fill) {}

    explicit ImageSet(Tensor pixels) : pixels_(std::move(pixels)) {
        if (pixels_.rank() != 3) throw std::invalid_argument("ImageSet: expected a rank-3 tensor");
    }

    // Rows of `rows` are flattened row-major images.
    static ImageSet from_rows(const Matrix& rows, std::size_t height, std::size_t width) {
        if (static_cast<std::size_t>(rows.cols()) != height * width) {
            throw std::invalid_argument("ImageSet::from_rows: row width does not match height*width");
        }
        ImageSet out(static_cast<std::size_t>(rows.rows()), height, width);
        out.rows() = rows;
        return out;
    }

    [[nodiscard]] std::size_t count() const { return pixels_.rank() ? pixels_.dim(0) : 0; }
    [[nodiscard]] std::size_t height() const { return pixels_.rank() ? pixels_.dim(1) : 0; }
    [[nodiscard]] std::size_t width() const { return pixels_.rank() ? pixels_.dim(2) : 0; }
    [[nodiscard]] std::size_t pixels_per_image() const { return height() * width(); }

    [[nodiscard]] const Tensor& pixels() const noexcept { return pixels_; }
    [[nodiscard]] Tensor& pixels() noexcept { return pixels_; }

    // N x (H*W) view.
    [[nodiscard]] MatrixMap rows() { return pixels_.as_matrix(); }
    [[nodiscard]] ConstMatrixMap rows() const { return pixels_.as_matrix(); }

    double& at(std::size_t n, std::size_t i, std::size_t j) {
        return pixels_[(n * height() + i) * width() + j];
    }
    [[nodiscard]] double at(std::size_t n, std::size_t i, std::size_t j) const {
        return pixels_[(n * height() + i) * width() + j];
    }

    // First `n` images (all of them when n >= count()).
    [[nodiscard]] ImageSet head(std::size_t n) const {
        n = std::min(n, count());
        ImageSet out(n, height(), width());
        out.rows() = rows().topRows(static_cast<Eigen::Index>(n));
        return out;
    }

    [[nodiscard]] ImageSet slice(std::size_t first, std::size_t n) const {
        if (first + n > count()) throw std::out_of_range("ImageSet::slice: range exceeds image count");
        ImageSet out(n, height(), width());
        out.rows() = rows().middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(n));
        return out;
    }

    bool operator==(const ImageSet&) const = default;

private:
    Tensor pixels_;
};

// ---------------------------------------------------------------------------
// IDX container
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

using Labels = std::vector<std::uint8_t>;
using IdxContent = std::variant<ImageSet, Labels>;

namespace detail {

inline std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset, const char* field) {
    if (offset + 4 > bytes.size()) {
        throw ParseError(std::string("truncated IDX header (") + field + ")", bytes.size());
    }
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

inline void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace detail

// Parses an unsigned-byte IDX file: 0x00000803 (N x H x W images, scaled to
// [0,1] by /255) or 0x00000801 (N labels). Errors carry the byte offset.
inline IdxContent read_idx(std::span<const std::uint8_t> bytes) {
    const std::uint32_t magic = detail::read_be32(bytes, 0, "magic");
    std::size_t ndims = 0;
    if (magic == kIdxImagesMagic) {
        ndims = 3;
    } else if (magic == kIdxLabelsMagic) {
        ndims = 1;
    } else {
        throw ParseError("unsupported magic", 0);
    }

    std::array<std::size_t, 3> dims{};
    std::size_t total = 1;
    for (std::size_t d = 0; d < ndims; ++d) {
        const std::size_t offset = 4 + 4 * d;
        dims[d] = detail::read_be32(bytes, offset, "dimension");
        if (dims[d] == 0 && d > 0) throw ParseError("zero image dimension", offset);
        if (dims[d] != 0 && total > std::numeric_limits<std::size_t>::max() / dims[d]) {
            throw ParseError("dimension overflow", offset);
        }
        total *= dims[d];
    }
    const std::size_t header = 4 + 4 * ndims;
    if (bytes.size() < header + total) throw ParseError("truncated IDX payload", bytes.size());
    if (bytes.size() > header + total) throw ParseError("trailing bytes after IDX payload", header + total);

    auto payload = bytes.subspan(header, total);
    if (ndims == 1) return Labels(payload.begin(), payload.end());

    ImageSet images(dims[0], dims[1], dims[2]);
    auto out = images.pixels().data();
    for (std::size_t i = 0; i < total; ++i) out[i] = static_cast<double>(payload[i]) / 255.0;
    return images;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline ImageSet load_idx_images(const std::string& path) {
    auto bytes = read_file_bytes(path);
    auto content = read_idx(bytes);
    if (auto* images = std::get_if<ImageSet>(&content)) return std::move(*images);
    throw ParseError("expected an image file (magic 0x00000803)", 0);
}

inline Labels load_idx_labels(const std::string& path) {
    auto bytes = read_file_bytes(path);
    auto content = read_idx(bytes);
    if (auto* labels = std::get_if<Labels>(&content)) return std::move(*labels);
    throw ParseError("expected a label file (magic 0x00000801)", 0);
}

// Quantizes to round(255 * clamp(v, 0, 1)).
inline std::vector<std::uint8_t> encode_idx(const ImageSet& images) {
    std::vector<std::uint8_t> out;
    out.reserve(16 + images.pixels().size());
    detail::write_be32(out, kIdxImagesMagic);
    detail::write_be32(out, static_cast<std::uint32_t>(images.count()));
    detail::write_be32(out, static_cast<std::uint32_t>(images.height()));
    detail::write_be32(out, static_cast<std::uint32_t>(images.width()));
    for (double v : images.pixels().data()) {
        out.push_back(static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))));
    }
    return out;
}

inline std::vector<std::uint8_t> encode_idx(const Labels& labels) {
    std::vector<std::uint8_t> out;
    detail::write_be32(out, kIdxLabelsMagic);
    detail::write_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

// ---------------------------------------------------------------------------
// Procedural corpus
// ---------------------------------------------------------------------------

// Random rectangles, ellipses and line strokes (1-3 per image, intensity in
// [0.5, 1]) on a black background.
inline ImageSet gen_shapes(Rng& rng, std::size_t n, std::size_t h, std::size_t w) {
    if (n == 0 || h == 0 || w == 0) throw std::invalid_argument("gen_shapes: n, h, w must be >= 1");
    ImageSet out(n, h, w);
    const double hd = static_cast<double>(h);
    const double wd = static_cast<double>(w);
    auto paint = [&](std::size_t img, std::size_t i, std::size_t j, double v) {
        double& px = out.at(img, i, j);
        px = std::max(px, v);
    };
    for (std::size_t img = 0; img < n; ++img) {
        const std::size_t shapes = 1 + rng.uniform_index(3);
        for (std::size_t s = 0; s < shapes; ++s) {
            const std::size_t kind = rng.uniform_index(3);
            const double intensity = 0.5 + 0.5 * rng.uniform();
            if (kind == 0) {  // rectangle
                const double rh = (0.2 + 0.4 * rng.uniform()) * hd;
                const double rw = (0.2 + 0.4 * rng.uniform()) * wd;
                const double top = rng.uniform() * (hd - rh);
                const double left = rng.uniform() * (wd - rw);
                for (std::size_t i = 0; i < h; ++i) {
                    for (std::size_t j = 0; j < w; ++j) {
                        const double ci = static_cast<double>(i) + 0.5;
                        const double cj = static_cast<double>(j) + 0.5;
                        if (ci >= top && ci < top + rh && cj >= left && cj < left + rw) paint(img, i, j, intensity);
                    }
                }
            } else if (kind == 1) {  // ellipse
                const double cy = (0.2 + 0.6 * rng.uniform()) * hd;
                const double cx = (0.2 + 0.6 * rng.uniform()) * wd;
                const double ry = (0.1 + 0.2 * rng.uniform()) * hd;
                const double rx = (0.1 + 0.2 * rng.uniform()) * wd;
                for (std::size_t i = 0; i < h; ++i) {
                    for (std::size_t j = 0; j < w; ++j) {
                        const double dy = (static_cast<double>(i) + 0.5 - cy) / ry;
                        const double dx = (static_cast<double>(j) + 0.5 - cx) / rx;
                        if (dy * dy + dx * dx <= 1.0) paint(img, i, j, intensity);
                    }
                }
            } else {  // stroke
                const double y0 = rng.uniform() * hd, x0 = rng.uniform() * wd;
                const double y1 = rng.uniform() * hd, x1 = rng.uniform() * wd;
                const double half = 0.75 + 0.5 * rng.uniform() * std::max(1.0, std::min(hd, wd) / 16.0);
                const double len2 = (y1 - y0) * (y1 - y0) + (x1 - x0) * (x1 - x0);
                for (std::size_t i = 0; i < h; ++i) {
                    for (std::size_t j = 0; j < w; ++j) {
                        const double py = static_cast<double>(i) + 0.5;
                        const double px = static_cast<double>(j) + 0.5;
                        double t = len2 > 0 ? ((py - y0) * (y1 - y0) + (px - x0) * (x1 - x0)) / len2 : 0.0;
                        t = std::clamp(t, 0.0, 1.0);
                        const double qy = y0 + t * (y1 - y0) - py;
                        const double qx = x0 + t * (x1 - x0) - px;
                        if (qy * qy + qx * qx <= half * half) paint(img, i, j, intensity);
                    }
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Corruption
// ---------------------------------------------------------------------------

// Masks are Tensor[N x H x W] with 1 = pixel kept, 0 = pixel deleted.
inline Tensor bernoulli_masks(std::size_t n, std::size_t h, std::size_t w, double p, Rng& rng) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("corrupt_pixels: p must lie in [0, 1]");
    Tensor mask({n, h, w}, 1.0);
    for (auto& m : mask.data()) {
        if (rng.uniform() < p) m = 0.0;
    }
    return mask;
}

// `count` size x size blocks per image with uniformly drawn top-left corners;
// blocks may overlap.
inline Tensor block_masks(std::size_t n, std::size_t h, std::size_t w, std::size_t count, std::size_t size,
                          Rng& rng) {
    if (size == 0 || size > std::min(h, w)) {
        throw std::invalid_argument("corrupt_blocks: block size must be in [1, min(H, W)]");
    }
    Tensor mask({n, h, w}, 1.0);
    for (std::size_t img = 0; img < n; ++img) {
        for (std::size_t b = 0; b < count; ++b) {
            const std::size_t top = rng.uniform_index(h - size + 1);
            const std::size_t left = rng.uniform_index(w - size + 1);
            for (std::size_t i = top; i < top + size; ++i) {
                for (std::size_t j = left; j < left + size; ++j) mask[(img * h + i) * w + j] = 0.0;
            }
        }
    }
    return mask;
}

inline ImageSet apply_mask(const ImageSet& images, const Tensor& mask) {
    if (mask.shape() != images.pixels().shape()) throw std::invalid_argument("apply_mask: shape mismatch");
    ImageSet out = images;
    auto px = out.pixels().data();
    auto m = mask.data();
    for (std::size_t i = 0; i < px.size(); ++i) {
        if (m[i] == 0.0) px[i] = 0.0;
    }
    return out;
}

inline ImageSet corrupt_pixels(const ImageSet& images, double p, Rng& rng) {
    return apply_mask(images, bernoulli_masks(images.count(), images.height(), images.width(), p, rng));
}

inline ImageSet corrupt_blocks(const ImageSet& images, std::size_t count, std::size_t size, Rng& rng) {
    return apply_mask(images, block_masks(images.count(), images.height(), images.width(), count, size, rng));
}

// signal + eta with eta Gaussian, rescaled after sampling so that
// 10 log10(|signal|^2 / |eta|^2) == target_db exactly.
inline Vector add_noise_snr(const Eigen::Ref<const Vector>& signal, double target_db, Rng& rng) {
    const double power = signal.squaredNorm();
    if (!(power > 0.0)) throw std::invalid_argument("add_noise_snr: signal has zero norm");
    Vector eta = gaussian_vector(rng, signal.size());
    const double eta_power = eta.squaredNorm();
    if (!(eta_power > 0.0)) throw NumericalError("add_noise_snr: sampled noise has zero norm");
    const double wanted = power * std::pow(10.0, -target_db / 10.0);
    eta *= std::sqrt(wanted / eta_power);
    return signal + eta;
}

inline Tensor add_noise_snr(const Tensor& signal, double target_db, Rng& rng) {
    Eigen::Map<const Vector> flat(signal.data().data(), static_cast<Eigen::Index>(signal.size()));
    Vector noisy = add_noise_snr(flat, target_db, rng);
    return Tensor(signal.shape(), std::vector<double>(noisy.data(), noisy.data() + noisy.size()));
}

inline double snr_db(const Eigen::Ref<const Vector>& signal, const Eigen::Ref<const Vector>& noisy) {
    return 10.0 * std::log10(signal.squaredNorm() / (noisy - signal).squaredNorm());
}

// ---------------------------------------------------------------------------
// Paired datasets
// ---------------------------------------------------------------------------

struct CorruptionSpec {
    enum class Kind { none, pixel_bernoulli, blocks };
    Kind kind = Kind::none;
    double p = 0.5;
    std::size_t count = 5;
    std::size_t size = 8;
    // Additive Gaussian noise on top of the deletion, calibrated per image.
    std::optional<double> snr_db;

    static CorruptionSpec pixels(double prob) { return {Kind::pixel_bernoulli, prob, 0, 1, std::nullopt}; }
    static CorruptionSpec block_deletion(std::size_t n, std::size_t sz) {
        return {Kind::blocks, 0.0, n, sz, std::nullopt};
    }
};

// Aligned (x, y) rows plus the deletion mask that produced y. Rows are
// flattened H x W images.
struct PairSet {
    Matrix x;
    Matrix y;
    Matrix mask;
    std::size_t height = 0;
    std::size_t width = 0;

    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
};

inline PairSet make_pairs(const ImageSet& clean, const CorruptionSpec& spec, Rng& rng) {
    const std::size_t n = clean.count(), h = clean.height(), w = clean.width();
    Tensor mask;
    switch (spec.kind) {
        case CorruptionSpec::Kind::none: mask = Tensor({n, h, w}, 1.0); break;
        case CorruptionSpec::Kind::pixel_bernoulli: mask = bernoulli_masks(n, h, w, spec.p, rng); break;
        case CorruptionSpec::Kind::blocks: mask = block_masks(n, h, w, spec.count, spec.size, rng); break;
    }
    PairSet out;
    out.height = h;
    out.width = w;
    out.x = clean.rows();
    out.mask = mask.as_matrix();
    // A deletion that wipes out every nonzero pixel is redrawn (up to 100
    // times), so observations of nonblank images are never blank.
    for (Eigen::Index i = 0; i < out.x.rows() && spec.kind != CorruptionSpec::Kind::none; ++i) {
        if (out.x.row(i).isZero(0.0)) continue;
        for (int attempt = 0; attempt < 100 && out.x.row(i).cwiseProduct(out.mask.row(i)).isZero(0.0); ++attempt) {
            const Tensor redo = spec.kind == CorruptionSpec::Kind::pixel_bernoulli
                                    ? bernoulli_masks(1, h, w, spec.p, rng)
                                    : block_masks(1, h, w, spec.count, spec.size, rng);
            out.mask.row(i) = redo.as_matrix().row(0);
        }
    }
    out.y = out.x.cwiseProduct(out.mask);
    if (spec.snr_db) {
        for (Eigen::Index i = 0; i < out.y.rows(); ++i) {
            Vector row = out.y.row(i).transpose();
            if (row.squaredNorm() > 0.0) out.y.row(i) = add_noise_snr(row, *spec.snr_db, rng).transpose();
        }
    }
    return out;
}

}  // namespace pae
