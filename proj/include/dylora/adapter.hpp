#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "dylora/matrix.hpp"
#include "dylora/rng.hpp"

namespace dylora {

// A frozen base map w0 (m x d) plus a trainable low-rank factor pair:
// w_up (m x r_max, zero-initialized) and w_dw (r_max x d, Gaussian).
// Rank indices are 1-based; any rank b in [r_min, r_max] selects the first
// b columns of w_up and first b rows of w_dw.
//
// Exclusively mutated by a single trainer; read-only use (forward/merge at
// several ranks) may run concurrently once training is quiescent.
struct DyLoraAdapter {
    Matrix w0;   // frozen, never touched by training
    Matrix w_up; // m x r_max
    Matrix w_dw; // r_max x d
    double alpha = 16.0;
    int r_min = 1;
    int r_max = 1;

    std::size_t out_dim() const { return w0.rows(); }
    std::size_t in_dim() const { return w0.cols(); }
};

// Gradients of a rank-b pass, shaped exactly like the b-truncated factors.
struct AdapterGrads {
    Matrix g_up; // m x b
    Matrix g_dw; // b x d
    int b = 0;
};

DyLoraAdapter init_adapter(Rng& rng, Matrix w0, int r_min, int r_max, double alpha,
                           double sigma);

// b-truncation: (w_dw rows 1..b, w_up columns 1..b). Copies, never views.
std::pair<Matrix, Matrix> truncate(const DyLoraAdapter& a, int b);

// The b-th row of w_dw (1 x d) and b-th column of w_up (m x 1).
std::pair<Matrix, Matrix> row_col_at(const DyLoraAdapter& a, int b);

// h = w0 x + (alpha/b) * w_up_b (w_dw_b x).  x is d x n.
Matrix forward(const DyLoraAdapter& a, const Matrix& x, int b);

// Gradients of the rank-b forward given g_out = dL/dh:
//   g_up = (alpha/b) g_out (w_dw_b x)^T,  g_dw = (alpha/b) w_up_b^T g_out x^T.
// Returned, never applied; update semantics belong to the trainer.
AdapterGrads backward(const DyLoraAdapter& a, const Matrix& x, int b,
                      const Matrix& g_out);

// Deployable dense weights w0 + (alpha/b) w_up_b w_dw_b; adapter unchanged.
Matrix merge(const DyLoraAdapter& a, int b);

// Copy with widened/narrowed rank bounds over the same stored factors
// (1 <= r_min' <= r_max' <= stored factor rank). Lets a model trained at a
// fixed rank be evaluated truncated to lower ranks.
DyLoraAdapter reranged(const DyLoraAdapter& a, int r_min, int r_max);

// Checkpoint round-trip; bit-exact binary format with a version field.
void save_adapter(const DyLoraAdapter& a, const std::string& path);
DyLoraAdapter load_adapter(const std::string& path);

// Merged-weights artifact (same container, single matrix payload).
void save_matrix(const Matrix& m, const std::string& path);
Matrix load_matrix(const std::string& path);

} // namespace dylora
