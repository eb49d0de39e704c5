#include <gtest/gtest.h>

#include <cmath>

#include "hicle/error.hpp"
#include "hicle/kernels.hpp"
#include "hicle/rng.hpp"

using namespace hicle;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

class KernelThreads : public ::testing::TestWithParam<int> {
 protected:
  void SetUp() override { kernels::set_threads(GetParam()); }
  void TearDown() override { kernels::set_threads(0); }
};

}  // namespace

TEST_P(KernelThreads, ParallelMatchesSerialBitForBit) {
  const Matrix a = random_matrix(37, 11, 1);
  const Matrix b = random_matrix(23, 11, 2);
  const Matrix c = random_matrix(11, 19, 3);
  const Matrix d = random_matrix(37, 5, 4);
  EXPECT_EQ(kernels::gram(a), kernels::reference::gram(a));
  EXPECT_EQ(kernels::matmul_nt(a, b), kernels::reference::matmul_nt(a, b));
  EXPECT_EQ(kernels::matmul_nn(a, c), kernels::reference::matmul_nn(a, c));
  EXPECT_EQ(kernels::matmul_tn(a, d), kernels::reference::matmul_tn(a, d));
  const Matrix s = random_matrix(29, 29, 5);
  EXPECT_EQ(kernels::row_logsumexp_offdiag(s), kernels::reference::row_logsumexp_offdiag(s));
  EXPECT_EQ(kernels::pairwise_sq_dist(a, b), kernels::reference::pairwise_sq_dist(a, b));
}

INSTANTIATE_TEST_SUITE_P(Threads, KernelThreads, ::testing::Values(1, 2, 4, 7));

TEST(Kernels, MatmulSmallByHand) {
  const Matrix a(2, 2, std::vector<double>{1, 2, 3, 4});
  const Matrix b(2, 2, std::vector<double>{5, 6, 7, 8});
  EXPECT_EQ(kernels::matmul_nn(a, b), Matrix(2, 2, std::vector<double>{19, 22, 43, 50}));
  EXPECT_EQ(kernels::matmul_nt(a, b), Matrix(2, 2, std::vector<double>{17, 23, 39, 53}));
  EXPECT_EQ(kernels::matmul_tn(a, b), Matrix(2, 2, std::vector<double>{26, 30, 38, 44}));
  EXPECT_EQ(kernels::gram(a), Matrix(2, 2, std::vector<double>{5, 11, 11, 25}));
}

TEST(Kernels, ShapeMismatchThrows) {
  EXPECT_THROW(kernels::matmul_nn(Matrix(2, 3), Matrix(2, 3)), Error);
  EXPECT_THROW(kernels::matmul_nt(Matrix(2, 3), Matrix(2, 4)), Error);
}

TEST(Kernels, LogSumExpOffDiagonal) {
  const Matrix s(3, 3, std::vector<double>{100, 1, 2, 0, 100, 0, 3, 3, 100});
  const auto lse = kernels::row_logsumexp_offdiag(s);
  EXPECT_NEAR(lse[0], std::log(std::exp(1.0) + std::exp(2.0)), 1e-14);
  EXPECT_NEAR(lse[1], std::log(2.0), 1e-14);
  EXPECT_NEAR(lse[2], 3.0 + std::log(2.0), 1e-14);
}

TEST(Kernels, LogSumExpLargeValuesStayFinite) {
  const Matrix s(2, 2, std::vector<double>{0, 1000, 1000, 0});
  const auto lse = kernels::row_logsumexp_offdiag(s);
  EXPECT_DOUBLE_EQ(lse[0], 1000.0);
}

TEST(Kernels, PairwiseSquaredDistances) {
  const Matrix a(2, 2, std::vector<double>{0, 0, 1, 1});
  const Matrix b(1, 2, std::vector<double>{3, 4});
  const Matrix d = kernels::pairwise_sq_dist(a, b);
  EXPECT_DOUBLE_EQ(d(0, 0), 25.0);
  EXPECT_DOUBLE_EQ(d(1, 0), 13.0);
}

TEST(Normalize, UnitRowsAndNorms) {
  const Matrix x(2, 2, std::vector<double>{3, 4, 0, -2});
  std::vector<double> norms;
  const Matrix y = kernels::normalize_rows(x, &norms);
  EXPECT_DOUBLE_EQ(y(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(y(0, 1), 0.8);
  EXPECT_DOUBLE_EQ(y(1, 1), -1.0);
  EXPECT_EQ(norms, (std::vector<double>{5.0, 2.0}));
}

TEST(Normalize, ZeroRowRejected) {
  try {
    kernels::normalize_rows(Matrix(1, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNormalization);
  }
}

TEST(Normalize, NonFiniteRejected) {
  Matrix x(1, 2, std::vector<double>{1.0, std::nan("")});
  try {
    kernels::normalize_rows(x);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumeric);
  }
}

TEST(Normalize, JacobianByHand) {
  // x = (3, 4), upstream (1, 0): (I - y y^T) g / |x| = (0.128, -0.096)
  const Matrix x(1, 2, std::vector<double>{3, 4});
  std::vector<double> norms;
  const Matrix y = kernels::normalize_rows(x, &norms);
  const Matrix g = kernels::normalize_rows_backward(y, norms, Matrix(1, 2, std::vector<double>{1, 0}));
  EXPECT_NEAR(g(0, 0), 0.128, 1e-15);
  EXPECT_NEAR(g(0, 1), -0.096, 1e-15);
}
