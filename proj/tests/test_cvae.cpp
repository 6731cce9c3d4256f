#include <gtest/gtest.h>

#include <cmath>

#include "oracles/oracles.hpp"
#include "qvae/cvae.hpp"
#include "qvae/estimators.hpp"

using namespace qvae;

namespace {

Samples random_records(std::size_t n, std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  Samples s(n, k);
  for (auto& x : s.symbols) x = static_cast<std::uint8_t>(rng.below(4));
  return s;
}

// Shift every parameter by a small random amount so biases are nonzero.
void jitter(Mlp& p, std::uint64_t seed, double scale) {
  Rng rng(seed);
  auto v = mlp_parameters(p);
  for (auto& x : v) x += scale * rng.normal();
  set_mlp_parameters(p, v);
}

// p(x | h) for a two-site model by tensor-product quadrature over z.
std::vector<double> quadrature_table(const CvaeModel& m, double h) {
  const int pts = 161;
  const double lim = 7.0, dz = 2 * lim / (pts - 1);
  std::vector<double> p(16, 0.0);
  Matrix z(pts * pts, 2);
  std::vector<double> w(pts * pts);
  for (int a = 0; a < pts; ++a)
    for (int b = 0; b < pts; ++b) {
      const double za = -lim + a * dz, zb = -lim + b * dz;
      z(a * pts + b, 0) = za;
      z(a * pts + b, 1) = zb;
      w[a * pts + b] = std::exp(-0.5 * (za * za + zb * zb)) / (2 * M_PI) * dz * dz;
    }
  Matrix in(z.rows(), 3);
  in.leftCols(2) = z;
  in.col(2).setConstant(m.scaling(h));
  const Matrix lp = detail::block_log_softmax(mlp_forward(m.decoder, in));
  for (Eigen::Index r = 0; r < z.rows(); ++r)
    for (int x0 = 0; x0 < 4; ++x0)
      for (int x1 = 0; x1 < 4; ++x1) p[x0 * 4 + x1] += w[r] * std::exp(lp(r, x0) + lp(r, 4 + x1));
  return p;
}

CvaeModel small_model(std::size_t n, std::size_t width, Activation act, std::uint64_t seed) {
  CvaeModel m = make_cvae(n, {width}, act, FieldScaling{}, seed);
  jitter(m.encoder, seed + 1, 0.3);
  jitter(m.decoder, seed + 2, 0.8);
  return m;
}

}  // namespace

TEST(Cvae, Shapes) {
  const CvaeModel m = make_cvae(5, {16, 8}, Activation::relu, FieldScaling{}, 3);
  EXPECT_EQ(m.encoder.widths, (std::vector<std::size_t>{21, 16, 8, 10}));
  EXPECT_EQ(m.decoder.widths, (std::vector<std::size_t>{6, 16, 8, 20}));
  EXPECT_EQ(m.hidden(), (std::vector<std::size_t>{16, 8}));
  const Matrix lp = decode_log_probs(m, Vector::Zero(5), 0.9);
  for (Eigen::Index i = 0; i < 5; ++i) EXPECT_NEAR(lp.row(i).array().exp().sum(), 1.0, 1e-12);
  const std::vector<std::uint8_t> rec{0, 1, 2, 3, 0};
  const auto [mu, xi] = encode(m, rec, 0.9);
  EXPECT_EQ(mu.size(), 5);
  EXPECT_EQ(xi.size(), 5);
  const std::vector<std::uint8_t> bad{0, 1};
  EXPECT_THROW(encode(m, bad, 0.9), DimensionError);
  EXPECT_THROW(decode_log_probs(m, Vector::Zero(3), 0.9), DimensionError);
}

TEST(Cvae, ElboGradientMatchesFiniteDifferences) {
  for (Activation act : {Activation::tanh, Activation::relu}) {
    CvaeModel m = small_model(3, 8, act, 11);
    const Samples s = random_records(3, 6, 5);
    const std::vector<std::size_t> rows{0, 1, 2, 3, 4, 5};
    const std::vector<double> fields{0.0, 0.4, 0.9, 1.1, 1.6, 2.0};
    Rng rng(9);
    Matrix eps(6, 3);
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps(i) = rng.normal();

    const ElboResult r = elbo(m, s, rows, fields, eps);
    EXPECT_NEAR(r.value, r.reconstruction + r.regularizer, 1e-12);

    for (int which = 0; which < 2; ++which) {
      Mlp& net = which == 0 ? m.encoder : m.decoder;
      const auto analytic = flatten(which == 0 ? r.encoder_grad : r.decoder_grad);
      const auto numeric = oracle::finite_diff_gradient(
          [&](const std::vector<double>& v) {
            CvaeModel c = m;
            set_mlp_parameters(which == 0 ? c.encoder : c.decoder, v);
            return elbo(c, s, rows, fields, eps, false).value;
          },
          mlp_parameters(net));
      ASSERT_EQ(analytic.size(), numeric.size());
      for (std::size_t i = 0; i < analytic.size(); ++i)
        EXPECT_NEAR(analytic[i], numeric[i], 1e-5 * (1 + std::abs(numeric[i]))) << activation_name(act) << " net " << which
                                                                               << " param " << i;
    }
  }
}

TEST(Cvae, ElboBoundsLogLikelihood) {
  const CvaeModel m = small_model(2, 6, Activation::tanh, 21);
  const double h = 0.7;
  const auto p = quadrature_table(m, h);
  double total = 0;
  for (double x : p) total += x;
  EXPECT_NEAR(total, 1.0, 1e-6);

  const std::size_t draws = 4000;
  Samples s(2, draws);
  std::vector<double> fields(draws, h);
  std::vector<std::size_t> rows(draws);
  std::iota(rows.begin(), rows.end(), 0);
  Rng rng(4);
  for (std::size_t idx = 0; idx < 16; ++idx) {
    for (std::size_t k = 0; k < draws; ++k) {
      s.symbols[2 * k] = static_cast<std::uint8_t>(idx / 4);
      s.symbols[2 * k + 1] = static_cast<std::uint8_t>(idx % 4);
    }
    // Per-draw ELBO values to get a standard error.
    detail::Moments mom;
    for (std::size_t k = 0; k < draws; ++k) {
      Matrix eps(1, 2);
      eps << rng.normal(), rng.normal();
      mom.add(elbo(m, s, {k}, {h}, eps, false).value);
    }
    const Estimate e = mom.estimate();
    EXPECT_LE(e.value, std::log(p[idx]) + 4 * e.std_error) << "outcome " << idx;
  }
}

TEST(Cvae, GenerationMatchesDecoderDistribution) {
  const CvaeModel m = small_model(2, 6, Activation::tanh, 31);
  const double h = 1.3;
  const auto p = quadrature_table(m, h);
  const Samples s = generate(m, h, 200000, 77);
  const ChiSquare c = chi_square_test(outcome_counts(s), p);
  EXPECT_GT(c.p_value, 1e-3) << "chi2 " << c.statistic << " dof " << c.dof;
}

TEST(Cvae, GenerationIsDeterministic) {
  const CvaeModel m = small_model(4, 8, Activation::relu, 41);
  EXPECT_EQ(generate(m, 0.5, 70000, 3), generate(m, 0.5, 70000, 3));
  EXPECT_NE(generate(m, 0.5, 1000, 3), generate(m, 0.5, 1000, 4));
  EXPECT_EQ(generate(m, 0.5, 0, 3).count(), 0u);
}

TEST(Cvae, GumbelSoftSample) {
  const CvaeModel m = small_model(3, 8, Activation::tanh, 51);
  const DrawNoise noise = draw_noise(3, 1, 8);
  const Vector z = noise.z.row(0).transpose();
  Matrix g(3, 4);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) g(i, j) = noise.g(0, 4 * i + j);
  EXPECT_THROW(gumbel_soft_sample(m, 1.0, 0.0, z, g), ValidationError);
  EXPECT_THROW(gumbel_soft_sample(m, 1.0, -0.5, z, g), ValidationError);
  const Matrix soft = gumbel_soft_sample(m, 1.0, 0.5, z, g);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(soft.row(i).sum(), 1.0, 1e-12);
  // Vanishing temperature recovers the hard sample from the same noise.
  const Matrix cold = gumbel_soft_sample(m, 1.0, 1e-4, z, g);
  const Samples hard = generate_from_noise(m, 1.0, noise);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(cold(i, hard(0, i)), 1.0, 1e-6);
}

TEST(Cvae, SusceptibilityBackpropMatchesSoftDifference) {
  const CvaeModel m = small_model(4, 8, Activation::tanh, 61);
  const PovmFrame f = tetrahedral_frame();
  const ObservableCoeffs cz = observable_coeffs(pauli::z(), f, "Z");
  const DrawNoise noise = draw_noise(4, 500, 12);
  const double h = 0.8, d = 1e-5;
  const DrawEstimates at = draw_estimates(m, h, cz, 0.5, noise, true);
  const DrawEstimates up = draw_estimates(m, h + d, cz, 0.5, noise, false);
  const DrawEstimates dn = draw_estimates(m, h - d, cz, 0.5, noise, false);
  for (std::size_t r = 0; r < 500; ++r)
    EXPECT_NEAR(at.dsoft_dh[r], (up.soft[r] - dn.soft[r]) / (2 * d), 1e-6 * (1 + std::abs(at.dsoft_dh[r])));

  const SusceptibilityResult s = susceptibility(m, h, cz, 500, 0.5, 12);
  EXPECT_EQ(s.draws, 500u);
  EXPECT_GT(s.chi_error, 0);
  EXPECT_THROW(susceptibility(m, h, cz, 10, 0.0, 12), ValidationError);
  EXPECT_THROW(susceptibility(m, h, cz, 0, 0.5, 12), ValidationError);
}

TEST(Cvae, LearnsAPointMass) {
  Dataset d;
  d.n_sites = 2;
  d.seed = 1;
  for (double h : {0.0, 1.0, 2.0}) {
    Samples s(2, 128);  // every record is (0, 0)
    d.groups.push_back({h, s});
  }
  TrainConfig cfg;
  cfg.batch_size = 64;
  cfg.epochs = 150;
  cfg.lr = 3e-3;
  cfg.hidden = {16};
  cfg.seed = 5;
  std::size_t calls = 0;
  const CvaeModel m = train(d, cfg, [&](std::size_t, double, const CvaeModel&) { ++calls; });
  EXPECT_EQ(calls, cfg.epochs);
  ASSERT_EQ(m.loss_history.size(), cfg.epochs);
  EXPECT_GT(m.loss_history.back(), m.loss_history.front());
  const Samples g = generate(m, 0.5, 2000, 9);
  std::size_t hits = 0;
  for (std::size_t k = 0; k < g.count(); ++k) hits += (g(k, 0) == 0 && g(k, 1) == 0);
  EXPECT_GT(hits, 1900u);
}

TEST(Cvae, TrainingIsDeterministic) {
  Dataset d;
  d.n_sites = 3;
  d.groups.push_back({0.5, random_records(3, 50, 1)});
  d.groups.push_back({1.5, random_records(3, 50, 2)});
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.epochs = 3;
  cfg.hidden = {8};
  cfg.seed = 17;
  const CvaeModel a = train(d, cfg), b = train(d, cfg);
  EXPECT_EQ(serialize_model(a), serialize_model(b));
  cfg.seed = 18;
  EXPECT_NE(serialize_model(a), serialize_model(train(d, cfg)));
}

TEST(Cvae, TrainingRejectsBadInput) {
  Dataset d;
  d.n_sites = 2;
  TrainConfig cfg;
  EXPECT_THROW(train(d, cfg), ValidationError);
  d.groups.push_back({0.5, random_records(2, 4, 1)});
  cfg.batch_size = 0;
  EXPECT_THROW(train(d, cfg), ValidationError);
  cfg.batch_size = 4;
  cfg.lr = 0;
  EXPECT_THROW(train(d, cfg), ValidationError);
}

TEST(CvaeFile, RoundTrip) {
  CvaeModel m = small_model(3, 5, Activation::tanh, 71);
  m.loss_history = {-4.0, -3.5, -3.25};
  m.scaling = {1.0, 1.0};
  m.seed = 99;
  const auto bytes = serialize_model(m);
  const CvaeModel r = deserialize_model(bytes);
  EXPECT_EQ(serialize_model(r), bytes);
  EXPECT_EQ(r.seed, 99u);
  EXPECT_EQ(r.loss_history, m.loss_history);
  EXPECT_EQ(r.encoder.activation, Activation::tanh);
  EXPECT_EQ(mlp_parameters(r.decoder), mlp_parameters(m.decoder));
}

TEST(CvaeFile, TamperingIsDetected) {
  const auto bytes = serialize_model(small_model(3, 5, Activation::relu, 81));
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  try {
    deserialize_model(flipped);
    FAIL() << "tampered checkpoint accepted";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos) << e.what();
  }
  auto truncated = bytes;
  truncated.resize(bytes.size() - 20);
  EXPECT_THROW(deserialize_model(truncated), FormatError);
  EXPECT_THROW(deserialize_model(std::vector<std::uint8_t>(5, 0)), FormatError);
  auto wrong_magic = bytes;
  wrong_magic[0] = 'X';
  EXPECT_THROW(deserialize_model(wrong_magic), FormatError);
}

TEST(Cvae, ZeroNetworks) {
  CvaeModel m = make_cvae(3, {8, 8}, Activation::relu, FieldScaling{}, 2);
  for (Mlp* net : {&m.encoder, &m.decoder}) {
    auto v = mlp_parameters(*net);
    std::fill(v.begin(), v.end(), 0.0);
    set_mlp_parameters(*net, v);
  }
  // Hidden layers vanish, so the encoder outputs its last bias.
  m.encoder.b.back().setLinSpaced(6, -0.5, 0.5);
  ++m.encoder.version;
  const std::vector<std::uint8_t> rec{1, 2, 3};
  const auto [mu, xi] = encode(m, rec, 1.7);
  for (int i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(mu(i), m.encoder.b.back()(i));
    EXPECT_DOUBLE_EQ(xi(i), m.encoder.b.back()(3 + i));
  }
  const Matrix lp = decode_log_probs(m, Vector::Ones(3), 0.2);
  for (Eigen::Index i = 0; i < lp.size(); ++i) EXPECT_NEAR(lp(i), std::log(0.25), 1e-15);

  // Uniform decoder, mu = xi = 0: the regularizer vanishes and the
  // reconstruction is -M N log 4.
  m.encoder.b.back().setZero();
  ++m.encoder.version;
  const Samples s = random_records(3, 7, 1);
  std::vector<std::size_t> rows(7);
  std::iota(rows.begin(), rows.end(), 0);
  Matrix eps = Matrix::Random(7, 3);
  const ElboResult r = elbo(m, s, rows, std::vector<double>(7, 0.9), eps, false);
  EXPECT_DOUBLE_EQ(r.regularizer, 0.0);
  EXPECT_NEAR(r.reconstruction, -7 * 3 * std::log(4.0), 1e-12);
}

TEST(Cvae, EncoderIsTotal) {
  const CvaeModel m = small_model(3, 8, Activation::relu, 3);
  for (std::size_t idx = 0; idx < 64; ++idx) {
    const std::vector<std::uint8_t> rec{std::uint8_t(idx / 16), std::uint8_t((idx / 4) % 4), std::uint8_t(idx % 4)};
    const auto [mu, xi] = encode(m, rec, 1.0);
    EXPECT_TRUE(mu.allFinite() && xi.allFinite());
  }
}

TEST(Cvae, SaturatedDecoderIsDeterministic) {
  CvaeModel m = make_cvae(2, {4}, Activation::relu, FieldScaling{}, 2);
  auto v = mlp_parameters(m.decoder);
  std::fill(v.begin(), v.end(), 0.0);
  set_mlp_parameters(m.decoder, v);
  m.decoder.b.back() << 60, 0, 0, 0, 0, 0, 60, 0;
  ++m.decoder.version;
  const Samples s = generate(m, 1.0, 500, 1);
  for (std::size_t k = 0; k < 500; ++k) {
    EXPECT_EQ(s(k, 0), 0);
    EXPECT_EQ(s(k, 1), 2);
  }
}

TEST(Cvae, TemperatureLimits) {
  const CvaeModel m = small_model(3, 8, Activation::tanh, 52);
  const DrawNoise noise = draw_noise(3, 1, 2);
  Matrix g(3, 4);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) g(i, j) = noise.g(0, 4 * i + j);
  const Matrix hot = gumbel_soft_sample(m, 0.4, 1e6, noise.z.row(0).transpose(), g);
  for (Eigen::Index i = 0; i < hot.size(); ++i) EXPECT_NEAR(hot(i), 0.25, 1e-3);
}

TEST(Cvae, FieldIndependentDecoderHasZeroSusceptibility) {
  CvaeModel m = small_model(3, 8, Activation::tanh, 53);
  m.decoder.w[0].row(3).setZero();  // the h input row
  ++m.decoder.version;
  const SusceptibilityResult s = susceptibility(m, 0.9, observable_coeffs(pauli::z(), tetrahedral_frame()), 200, 0.5, 4);
  EXPECT_EQ(s.chi, 0.0);
  EXPECT_EQ(s.chi_error, 0.0);
  EXPECT_EQ(s.central, 0.0);
}

TEST(Cvae, SoftEstimateApproachesHardAsTemperatureFalls) {
  const CvaeModel m = small_model(4, 8, Activation::tanh, 54);
  const ObservableCoeffs cz = observable_coeffs(pauli::z(), tetrahedral_frame());
  const DrawNoise noise = draw_noise(4, 20000, 5);
  double prev = INFINITY;
  for (double t : {2.0, 1.0, 0.5, 0.1}) {
    const DrawEstimates e = draw_estimates(m, 1.1, cz, t, noise, false);
    std::vector<double> diff(e.soft.size());
    for (std::size_t r = 0; r < diff.size(); ++r) diff[r] = e.soft[r] - e.hard[r];
    const auto [gap, se] = detail::mean_and_error(diff);
    EXPECT_LT(std::abs(gap), prev) << "T=" << t;
    prev = std::abs(gap);
    if (t == 0.1) {
      EXPECT_LT(std::abs(gap), 3 * se) << "gap " << gap << " se " << se;
    }
  }
}
