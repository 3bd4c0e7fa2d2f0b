#include "dance/matrix.hpp"

#include <cmath>

namespace dance {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                         " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
}

void ensure_finite(const Matrix& m, const char* op) {
    for (double v : m.storage()) {
        if (!std::isfinite(v)) {
            throw ValueError(std::string(op) + ": non-finite entry produced");
        }
    }
}

void ensure_shape(const Matrix& a, std::size_t rows, std::size_t cols, const char* op) {
    if (a.rows() != rows || a.cols() != cols) {
        throw ShapeError(std::string(op) + ": expected " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", got " + shape_str(a));
    }
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    }
    return t;
}

std::string shape_str(const Matrix& a) {
    return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

} // namespace dance
