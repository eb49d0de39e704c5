#pragma once

#include <vector>

#include "hicle/matrix.hpp"

// Dense kernels shared by the losses, the encoder and the evaluators.
//
// Every kernel exists twice: an OpenMP version (namespace kernels) used by the
// library, and a plain serial version (namespace kernels::reference) kept for
// tests and benchmarks. Each output element is produced by one thread with a
// fixed summation order, so both versions agree bit-for-bit at any thread count.
namespace hicle::kernels {

// Thread count for parallel sections; n <= 0 restores the OpenMP default.
void set_threads(int n);
int max_threads();

// a * a^T
Matrix gram(const Matrix& a);
// a * b^T; a is n x k, b is m x k.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// a * b; a is n x k, b is k x m.
Matrix matmul_nn(const Matrix& a, const Matrix& b);
// a^T * b; a is n x k, b is n x m.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// log sum_{j != i} exp(s(i, j)) for each row i of a square matrix, max-shifted.
std::vector<double> row_logsumexp_offdiag(const Matrix& s);
// Squared Euclidean distances between rows of a and rows of b.
Matrix pairwise_sq_dist(const Matrix& a, const Matrix& b);

namespace reference {
Matrix gram(const Matrix& a);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix matmul_nn(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
std::vector<double> row_logsumexp_offdiag(const Matrix& s);
Matrix pairwise_sq_dist(const Matrix& a, const Matrix& b);
}  // namespace reference

// Row-wise L2 normalization. Throws kNormalization for a zero-norm row and
// kNumeric for non-finite input. norms receives the pre-normalization norms.
Matrix normalize_rows(const Matrix& x, std::vector<double>* norms = nullptr);
// Backpropagates through normalize_rows: returns (I - y y^T) g / ||x|| per row,
// where y is the normalized output.
Matrix normalize_rows_backward(const Matrix& normalized, const std::vector<double>& norms,
                               const Matrix& upstream);

}  // namespace hicle::kernels
