#include <algorithm>
#include <cmath>
#include <limits>

#include "hicle/kernels.hpp"

namespace hicle::kernels::reference {

Matrix gram(const Matrix& a) { return matmul_nt(a, a); }

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) fail(ErrorKind::kStructural, "matmul_nt inner dimension mismatch");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto br = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < ar.size(); ++k) acc += ar[k] * br[k];
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix matmul_nn(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) fail(ErrorKind::kStructural, "matmul_nn inner dimension mismatch");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) fail(ErrorKind::kStructural, "matmul_tn inner dimension mismatch");
  Matrix out(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.rows(); ++k) acc += a(k, i) * b(k, j);
      out(i, j) = acc;
    }
  }
  return out;
}

std::vector<double> row_logsumexp_offdiag(const Matrix& s) {
  if (s.rows() != s.cols()) fail(ErrorKind::kStructural, "logsumexp needs a square matrix");
  std::vector<double> out(s.rows(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < s.rows(); ++i) {
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
  for (std::size_t i = 0; i < a.rows(); ++i) {
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

}  // namespace hicle::kernels::reference
