#include <gtest/gtest.h>

#include <cmath>

#include "oracles/oracles.hpp"
#include "qvae/mlp.hpp"

using namespace qvae;

namespace {

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

// Scalar objective <c, f(x)> summed over the batch.
double objective(const Mlp& p, const Matrix& x, const Matrix& c) { return (mlp_forward(p, x).array() * c.array()).sum(); }

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(-1, 1);
  return m;
}

void check_gradients(std::vector<std::size_t> widths, Activation act, std::uint64_t seed, double tol) {
  Rng rng(seed);
  Mlp p = init_mlp(widths, act, rng);
  for (auto& b : p.b)
    for (Eigen::Index j = 0; j < b.size(); ++j) b(j) = rng.uniform(-0.5, 0.5);
  const Matrix x = random_matrix(5, widths.front(), rng), c = random_matrix(5, widths.back(), rng);
  MlpTape tape;
  mlp_forward(p, x, &tape);
  Matrix dx;
  const auto analytic = flatten(mlp_backward(tape, c, &dx));
  const auto params = mlp_parameters(p);
  const auto numeric = oracle::finite_diff_gradient(
      [&](const std::vector<double>& v) {
        Mlp q = p;
        set_mlp_parameters(q, v);
        return objective(q, x, c);
      },
      params);
  EXPECT_LT(relative_error(analytic, numeric), tol);
  for (std::size_t i = 0; i < analytic.size(); ++i)
    EXPECT_NEAR(analytic[i], numeric[i], tol * (1 + std::abs(numeric[i]))) << "parameter " << i;

  std::vector<double> xv(x.data(), x.data() + x.size()), dxv(dx.data(), dx.data() + dx.size());
  const auto num_x = oracle::finite_diff_gradient(
      [&](const std::vector<double>& v) { return objective(p, Eigen::Map<const Matrix>(v.data(), x.rows(), x.cols()), c); },
      xv);
  EXPECT_LT(relative_error(dxv, num_x), tol);
}

}  // namespace

TEST(Mlp, ZeroNetworkGivesZero) {
  Rng rng(1);
  Mlp p = init_mlp({3, 4, 2}, Activation::relu, rng);
  for (auto& w : p.w) w.setZero();
  Vector out = mlp_forward_one(p, Vector::Constant(3, 0.7));
  EXPECT_EQ(out, Vector::Zero(2));
}

TEST(Mlp, IdentityLayer) {
  Rng rng(2);
  Mlp p = init_mlp({3, 3}, Activation::relu, rng);
  p.w[0] = Matrix::Identity(3, 3);
  Vector x(3);
  x << -1, 2, 0.5;
  EXPECT_EQ(mlp_forward_one(p, x), x);
}

TEST(Mlp, InitializationBounds) {
  Rng rng(3);
  Mlp p = init_mlp({10, 30}, Activation::relu, rng);
  const double lim = std::sqrt(6.0 / 40);
  EXPECT_LE(p.w[0].cwiseAbs().maxCoeff(), lim);
  EXPECT_GT(p.w[0].cwiseAbs().maxCoeff(), 0.8 * lim);
  EXPECT_EQ(p.b[0], Vector::Zero(30));
}

TEST(Mlp, GradientsMatchFiniteDifferences) {
  check_gradients({3, 16, 2}, Activation::relu, 4, 1e-6);
  check_gradients({3, 16, 2}, Activation::tanh, 5, 1e-6);
  check_gradients({9, 8, 8, 6}, Activation::relu, 6, 1e-6);
  check_gradients({4, 8, 8, 12}, Activation::tanh, 7, 1e-6);
}

TEST(Mlp, ForwardIsDeterministic) {
  Rng rng(8);
  Mlp p = init_mlp({4, 8, 3}, Activation::relu, rng);
  Matrix x = random_matrix(6, 4, rng);
  EXPECT_EQ(mlp_forward(p, x), mlp_forward(p, x));
}

TEST(Mlp, StaleTapeRejected) {
  Rng rng(9);
  Mlp p = init_mlp({2, 4, 1}, Activation::relu, rng);
  MlpTape tape;
  mlp_forward(p, Matrix::Ones(1, 2), &tape);
  AdamState s = AdamState::fresh(p);
  adam_step(p, MlpGrads::zeros_like(p), s);
  EXPECT_THROW(mlp_backward(tape, Matrix::Ones(1, 1)), ValidationError);
  EXPECT_THROW(mlp_forward(p, Matrix(Matrix::Ones(1, 3))), DimensionError);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Rng rng(10);
  Mlp p = init_mlp({3, 5, 2}, Activation::relu, rng);
  const auto before = mlp_parameters(p);
  AdamState s = AdamState::fresh(p);
  adam_step(p, MlpGrads::zeros_like(p), s);
  EXPECT_EQ(mlp_parameters(p), before);
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Rng rng(11);
  Mlp p = init_mlp({2, 3}, Activation::identity, rng);
  const auto before = mlp_parameters(p);
  MlpGrads g = MlpGrads::zeros_like(p);
  g.w[0] << 0.3, -2.0, 1e-3, 5.0, -0.01, 0.7;
  g.b[0] << -1, 1, 0.5;
  AdamState s = AdamState::fresh(p);
  adam_step(p, g, s);
  const auto after = mlp_parameters(p), gv = flatten(g);
  for (std::size_t i = 0; i < gv.size(); ++i)
    EXPECT_NEAR(after[i] - before[i], -1e-3 * gv[i] / (std::abs(gv[i]) + 1e-8), 1e-12);
}

TEST(Adam, QuadraticBowl) {
  Mlp p;
  p.widths = {1, 1};
  p.activation = Activation::identity;
  p.w = {Matrix::Constant(1, 1, 1.0)};
  p.b = {Vector::Zero(1)};
  AdamState s = AdamState::fresh(p);
  s.lr = 1e-2;
  for (int it = 0; it < 500; ++it) {
    MlpGrads g = MlpGrads::zeros_like(p);
    g.w[0](0, 0) = 2 * p.w[0](0, 0);
    adam_step(p, g, s);
  }
  EXPECT_LT(std::abs(p.w[0](0, 0)), 1e-3);
}

TEST(Adam, NonFiniteGradientNamesLayer) {
  Rng rng(12);
  Mlp p = init_mlp({2, 3, 2}, Activation::relu, rng);
  MlpGrads g = MlpGrads::zeros_like(p);
  g.b[1](0) = NAN;
  AdamState s = AdamState::fresh(p);
  try {
    adam_step(p, g, s);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos);
  }
}
