#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "hicle/kernels.hpp"

namespace hicle::kernels {

void set_threads(int n) {
  if (n > 0) {
    omp_set_num_threads(n);
  } else {
    omp_set_num_threads(omp_get_num_procs());
  }
}

int max_threads() { return omp_get_max_threads(); }

Matrix gram(const Matrix& a) { return matmul_nt(a, a); }

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) fail(ErrorKind::kStructural, "matmul_nt inner dimension mismatch");
  Matrix out(a.rows(), b.rows());
  const auto n = static_cast<std::ptrdiff_t>(a.rows());
  const std::size_t m = b.rows();
  const std::size_t inner = a.cols();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double* ar = a.row(static_cast<std::size_t>(i)).data();
    double* dst = out.row(static_cast<std::size_t>(i)).data();
    for (std::size_t j = 0; j < m; ++j) {
      const double* br = b.row(j).data();
      double acc = 0.0;
      for (std::size_t k = 0; k < inner; ++k) acc += ar[k] * br[k];
      dst[j] = acc;
    }
  }
  return out;
}

Matrix matmul_nn(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) fail(ErrorKind::kStructural, "matmul_nn inner dimension mismatch");
  Matrix out(a.rows(), b.cols());
  const auto n = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(r, k) * b(k, j);
      out(r, j) = acc;
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) fail(ErrorKind::kStructural, "matmul_tn inner dimension mismatch");
  Matrix out(a.cols(), b.cols());
  const auto n = static_cast<std::ptrdiff_t>(a.cols());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.rows(); ++k) acc += a(k, r) * b(k, j);
      out(r, j) = acc;
    }
  }
  return out;
}

std::vector<double> row_logsumexp_offdiag(const Matrix& s) {
  if (s.rows() != s.cols()) fail(ErrorKind::kStructural, "logsumexp needs a square matrix");
  std::vector<double> out(s.rows(), -std::numeric_limits<double>::infinity());
  const auto n = static_cast<std::ptrdiff_t>(s.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < s.cols(); ++j)
      if (j != i) peak = std::max(peak, s(i, j));
    if (!std::isfinite(peak)) continue;
    double acc = 0.0;
    for (std::size_t j = 0; j < s.cols(); ++j)
      if (j != i) acc += std::exp(s(i, j) - peak);
    out[i] = peak + std::log(acc);
  }
  return out;
}

Matrix pairwise_sq_dist(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) fail(ErrorKind::kStructural, "distance dimension mismatch");
  Matrix out(a.rows(), b.rows());
  const auto n = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto br = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < ar.size(); ++k) {
        const double diff = ar[k] - br[k];
        acc += diff * diff;
      }
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix normalize_rows(const Matrix& x, std::vector<double>* norms) {
  Matrix out(x.rows(), x.cols());
  std::vector<double> local(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double sq = 0.0;
    for (double v : x.row(i)) {
      if (!std::isfinite(v)) fail(ErrorKind::kNumeric, "non-finite value in row " + std::to_string(i));
      sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (!(norm > 0.0)) fail(ErrorKind::kNormalization, "zero-norm row " + std::to_string(i));
    local[i] = norm;
    auto src = x.row(i);
    auto dst = out.row(i);
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] = src[k] / norm;
  }
  if (norms != nullptr) *norms = std::move(local);
  return out;
}

Matrix normalize_rows_backward(const Matrix& normalized, const std::vector<double>& norms,
                               const Matrix& upstream) {
  if (!normalized.same_shape(upstream) || norms.size() != normalized.rows())
    fail(ErrorKind::kStructural, "normalize_rows_backward shape mismatch");
  Matrix out(upstream.rows(), upstream.cols());
  for (std::size_t i = 0; i < upstream.rows(); ++i) {
    auto y = normalized.row(i);
    auto g = upstream.row(i);
    double dot = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) dot += y[k] * g[k];
    auto dst = out.row(i);
    for (std::size_t k = 0; k < y.size(); ++k) dst[k] = (g[k] - dot * y[k]) / norms[i];
  }
  return out;
}

}  // namespace hicle::kernels
