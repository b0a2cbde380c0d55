#ifndef QUANTMERGE_MATRIX_HPP
#define QUANTMERGE_MATRIX_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "quantmerge/errors.hpp"

namespace quantmerge {

/// Dense row-major feature matrix.
struct DataMatrix {
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<double> values;

    DataMatrix() = default;
    DataMatrix(std::size_t rows, std::size_t cols)
        : n_rows(rows), n_cols(cols), values(rows * cols, 0.0) {}

    double at(std::size_t r, std::size_t c) const { return values[r * n_cols + c]; }
    double& at(std::size_t r, std::size_t c) { return values[r * n_cols + c]; }
    std::span<const double> row(std::size_t r) const {
        return std::span<const double>(values).subspan(r * n_cols, n_cols);
    }
};

struct Dataset {
    DataMatrix x;
    std::vector<double> y;

    std::size_t size() const { return x.n_rows; }

    void validate() const {
        if (x.n_rows != y.size()) throw InvariantError("Dataset: target length mismatch");
    }
};

}  // namespace quantmerge

#endif  // QUANTMERGE_MATRIX_HPP
