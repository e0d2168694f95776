#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "dylora/rng.hpp"

namespace dylora {

// Dense row-major real64 matrix. Value type: copy/move freely, share
// read-only across threads. Storage indexing is 0-based; the slicing API is
// 1-based inclusive to match the truncation conventions used elsewhere.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols); // zero-filled

    static Matrix zeros(std::size_t rows, std::size_t cols);
    static Matrix identity(std::size_t n);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool all_finite() const;
    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s);

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Standard product; accumulation order is fixed as row-major dot products
// (k ascending per output entry), so results are bit-reproducible.
Matrix matmul(const Matrix& a, const Matrix& b);

// a * transpose(b) and transpose(a) * b without forming the transpose.
// Same k-ascending accumulation as matmul applied to the transposed operand.
Matrix matmul_transb(const Matrix& a, const Matrix& b);
Matrix matmul_transa(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

// Contiguous band copies, 1-based inclusive bounds. The source is never
// mutated; out-of-range bounds raise BoundsError.
Matrix slice_rows(const Matrix& a, std::size_t from, std::size_t to);
Matrix slice_cols(const Matrix& a, std::size_t from, std::size_t to);

// i.i.d. N(0, sigma^2) entries from the seeded generator, row-major order.
Matrix gaussian(Rng& rng, std::size_t rows, std::size_t cols, double sigma);

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(const Matrix& a, const Matrix& b); // matmul
Matrix operator*(double s, Matrix a);

bool bit_equal(const Matrix& a, const Matrix& b);
double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);

} // namespace dylora
