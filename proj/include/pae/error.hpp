#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pae {

// Raised when a numerical routine cannot deliver its contract (SVD did not
// converge, Gram matrix singular, ...). Argument problems use
// std::invalid_argument instead.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A training or optimization loop produced a non-finite objective.
// `index` is the epoch (training) or iteration (inversion) where it happened.
class DivergenceError : public NumericalError {
public:
    DivergenceError(const std::string& what, std::size_t index)
        : NumericalError(what + " (at index " + std::to_string(index) + ")"), index_(index) {}

    [[nodiscard]] std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

// Malformed binary input. `offset` is the byte offset where parsing failed.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}

    [[nodiscard]] std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

}  // namespace pae
