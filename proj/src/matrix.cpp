#include "dylora/matrix.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "dylora/errors.hpp"

namespace dylora {

namespace {

std::string dims(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix Matrix::zeros(std::size_t rows, std::size_t cols) {
    return Matrix(rows, cols);
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m.at(i, i) = 1.0;
    }
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw ShapeError("from_rows: ragged row lengths");
        }
        std::size_t j = 0;
        for (double v : row) {
            m.at(i, j++) = v;
        }
        ++i;
    }
    return m;
}

bool Matrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

Matrix& Matrix::operator+=(const Matrix& other) {
    if (!same_shape(other)) {
        throw ShapeError("add: shape mismatch " + dims(*this) + " vs " + dims(other));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] += other.data_[i];
    }
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    if (!same_shape(other)) {
        throw ShapeError("sub: shape mismatch " + dims(*this) + " vs " + dims(other));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] -= other.data_[i];
    }
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& v : data_) {
        v *= s;
    }
    return *this;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ, " + dims(a) + " * " + dims(b));
    }
    Matrix out(a.rows(), b.cols());
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a.data() + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                acc += arow[p] * b.data()[p * n + j];
            }
            out.at(i, j) = acc;
        }
    }
    return out;
}

Matrix matmul_transb(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_transb: inner dimensions differ, " + dims(a) + " * " +
                         dims(b) + "^T");
    }
    Matrix out(a.rows(), b.rows());
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a.data() + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b.data() + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                acc += arow[p] * brow[p];
            }
            out.at(i, j) = acc;
        }
    }
    return out;
}

Matrix matmul_transa(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_transa: inner dimensions differ, " + dims(a) + "^T * " +
                         dims(b));
    }
    Matrix out(a.cols(), b.cols());
    const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                acc += a.data()[p * m + i] * b.data()[p * n + j];
            }
            out.at(i, j) = acc;
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            out.at(j, i) = a.at(i, j);
        }
    }
    return out;
}

Matrix slice_rows(const Matrix& a, std::size_t from, std::size_t to) {
    if (from < 1 || from > to || to > a.rows()) {
        throw BoundsError("slice_rows: range [" + std::to_string(from) + "," +
                          std::to_string(to) + "] outside 1.." + std::to_string(a.rows()));
    }
    Matrix out(to - from + 1, a.cols());
    std::memcpy(out.data(), a.data() + (from - 1) * a.cols(),
                out.size() * sizeof(double));
    return out;
}

Matrix slice_cols(const Matrix& a, std::size_t from, std::size_t to) {
    if (from < 1 || from > to || to > a.cols()) {
        throw BoundsError("slice_cols: range [" + std::to_string(from) + "," +
                          std::to_string(to) + "] outside 1.." + std::to_string(a.cols()));
    }
    Matrix out(a.rows(), to - from + 1);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        std::memcpy(out.data() + i * out.cols(), a.data() + i * a.cols() + (from - 1),
                    out.cols() * sizeof(double));
    }
    return out;
}

Matrix gaussian(Rng& rng, std::size_t rows, std::size_t cols, double sigma) {
    if (!(sigma > 0.0)) {
        throw ConfigError("gaussian: sigma must be positive");
    }
    Matrix out(rows, cols);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] = rng.gaussian(sigma);
    }
    return out;
}

Matrix operator+(Matrix a, const Matrix& b) {
    a += b;
    return a;
}

Matrix operator-(Matrix a, const Matrix& b) {
    a -= b;
    return a;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
    return matmul(a, b);
}

Matrix operator*(double s, Matrix a) {
    a *= s;
    return a;
}

bool bit_equal(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        return false;
    }
    return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::fabs(a.data()[i]));
    }
    return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("max_abs_diff: shape mismatch");
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
    }
    return m;
}

double frobenius_norm(const Matrix& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a.data()[i] * a.data()[i];
    }
    return std::sqrt(acc);
}

} // namespace dylora
