#include <gtest/gtest.h>

#include <cmath>

#include "oracles/oracles.hpp"
#include "qvae/lanczos.hpp"
#include "qvae/tfi.hpp"

using namespace qvae;

namespace {

LinearMap dense_map(const RealTensor& m) {
  return [&m](std::span<const double> x, std::span<double> y) {
    const std::size_t n = m.shape()[0];
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0;
      for (std::size_t j = 0; j < n; ++j) acc += m[i * n + j] * x[j];
      y[i] = acc;
    }
  };
}

}  // namespace

TEST(Lanczos, DiagonalOperator) {
  RealTensor d = RealTensor::matrix(3, 3, {5, 0, 0, 0, 1, 0, 0, 0, 3});
  EigenPair e = lanczos_lowest(dense_map(d), 3);
  EXPECT_NEAR(e.value, 1.0, 1e-12);
  EXPECT_NEAR(std::abs(e.vector[1]), 1.0, 1e-10);
}

TEST(Lanczos, ExcitedGuessDoesNotTrap) {
  // Starting exactly on the eigenvector of 5 forces an immediate breakdown.
  RealTensor d = RealTensor::matrix(3, 3, {5, 0, 0, 0, 1, 0, 0, 0, 3});
  std::vector<double> guess{1, 0, 0};
  EigenPair e = lanczos_lowest(dense_map(d), 3, {}, guess);
  EXPECT_NEAR(e.value, 1.0, 1e-12);
}

TEST(Lanczos, PauliX) {
  RealTensor x = pauli::x();
  EXPECT_NEAR(lanczos_lowest(dense_map(x), 2).value, -1.0, 1e-12);
}

TEST(Lanczos, TfiEightSitesMatchesDenseSolver) {
  TfiParams p{8, 1.0, 1.0, 0.0};
  RealTensor h = tfi_dense(p);
  const double ref = oracle::dense_ground_energy(h);
  LanczosOptions opt;
  opt.tol = 1e-12;
  EigenPair e = lanczos_lowest(dense_map(h), h.shape()[0], opt);
  EXPECT_NEAR(e.value, ref, 1e-9);
  EXPECT_LE(e.residual, 1e-12 * std::abs(e.value) + 1e-15);
}

TEST(Lanczos, BudgetExhaustionIsNumericalError) {
  TfiParams p{8, 1.0, 1.0, 0.0};
  RealTensor h = tfi_dense(p);
  LanczosOptions opt;
  opt.tol = 1e-14;
  opt.max_iter = 5;
  opt.krylov_dim = 4;
  EXPECT_THROW(lanczos_lowest(dense_map(h), h.shape()[0], opt), NumericalError);
}
