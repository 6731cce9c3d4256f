#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "oracles/oracles.hpp"
#include "qvae/dataset.hpp"
#include "qvae/estimators.hpp"

using namespace qvae;

namespace {

const PovmFrame& frame() {
  static const PovmFrame f = tetrahedral_frame();
  return f;
}

DmrgResult ground(std::size_t n, double h, double bias = 0.0) {
  DmrgOptions o;
  o.seed = 100 + n;
  return dmrg_ground_state(tfi_mpo({n, 1.0, h, bias}), o);
}

// Expected total-variation distance of a perfect sampler's empirical table
// from the truth, plus a 5-sigma allowance for its fluctuation.
double tv_noise_bound(const std::vector<double>& p, double k) {
  double mean = 0, var = 0;
  for (double x : p) {
    mean += 0.5 * std::sqrt(2 * x * (1 - x) / (M_PI * k));
    var += 0.25 * (1 - 2 / M_PI) * x * (1 - x) / k;
  }
  return mean + 5 * std::sqrt(var);
}

}  // namespace

TEST(SampleChain, PointMassIsDeterministic) {
  // Bond-1 mass MPS with all weight on the string (2, 0, 3).
  Mps p;
  for (std::uint8_t s : {2, 0, 3}) {
    RealTensor t({1, 4, 1});
    t(0, s, 0) = 1.0;
    p.sites.push_back(t);
  }
  Samples out = sample_chain(p, 100, 1);
  for (std::size_t k = 0; k < 100; ++k) {
    EXPECT_EQ(out(k, 0), 2);
    EXPECT_EQ(out(k, 1), 0);
    EXPECT_EQ(out(k, 2), 3);
  }
}

TEST(SampleChain, SingleSiteFrequencies) {
  Mps up = product_mps({{1.0, 0.0}});
  Samples s = sample_chain(mass_function_mps(up, frame()), 1000000, 2);
  const double probs[4] = {0.5, 1.0 / 6, 1.0 / 6, 1.0 / 6};
  const auto counts = outcome_counts(s);
  for (int a = 0; a < 4; ++a) {
    const double f = counts[a] / 1e6, se = std::sqrt(probs[a] * (1 - probs[a]) / 1e6);
    EXPECT_LT(std::abs(f - probs[a]), 3 * se) << a;
  }
}

TEST(SampleChain, RejectsUnnormalizedMass) {
  Mps p;
  p.sites.push_back(RealTensor({1, 4, 1}, std::vector<double>{0.5, 0.5, 0.5, 0.5}));
  EXPECT_THROW(sample_chain(p, 1, 0), ValidationError);
  Mps neg;
  neg.sites.push_back(RealTensor({1, 4, 1}, std::vector<double>{1.5, -0.5, 0, 0}));
  EXPECT_THROW(sample_chain(neg, 1, 0), NumericalError);
}

TEST(SampleChain, FiveSitesGoodnessOfFit) {
  DmrgResult r = ground(5, 0.9);
  const auto exact = enumerate_exact(to_state_vector(r.state), frame());
  Samples s = sample_chain(mass_function_mps(r.state, frame()), 1000000, 3);
  const auto counts = outcome_counts(s);
  const ChiSquare c = chi_square_test(counts, exact);
  EXPECT_GT(c.p_value, 1e-3) << "chi2=" << c.statistic << " dof=" << c.dof;
  EXPECT_LT(total_variation(empirical_table(s), exact), tv_noise_bound(exact, 1e6));
}

TEST(SampleState, FiveSitesGoodnessOfFit) {
  DmrgResult r = ground(5, 0.9);
  const auto exact = enumerate_exact(to_state_vector(r.state), frame());
  Samples s = sample_state_povm(r.state, frame(), 1000000, 4);
  const ChiSquare c = chi_square_test(outcome_counts(s), exact);
  EXPECT_GT(c.p_value, 1e-3) << "chi2=" << c.statistic << " dof=" << c.dof;
  EXPECT_LT(total_variation(empirical_table(s), exact), tv_noise_bound(exact, 1e6));
}

TEST(SampleState, MarginalsMatchMassMps) {
  DmrgResult r = ground(10, 1.1);
  const auto marg = mass_marginals(mass_function_mps(r.state, frame()));
  const std::size_t k = 200000;
  Samples s = sample_state_povm(r.state, frame(), k, 5);
  for (std::size_t i = 0; i < 10; ++i) {
    std::array<double, 4> f{};
    for (std::size_t rec = 0; rec < k; ++rec) f[s(rec, i)] += 1.0 / k;
    for (int a = 0; a < 4; ++a) {
      const double se = std::sqrt(marg[i][a] * (1 - marg[i][a]) / k);
      EXPECT_LT(std::abs(f[a] - marg[i][a]), 3 * se + 1e-12) << "site " << i << " outcome " << a;
    }
  }
}

TEST(SampleState, SameSeedSameRecords) {
  DmrgResult r = ground(6, 0.8);
  EXPECT_EQ(sample_state_povm(r.state, frame(), 1000, 9), sample_state_povm(r.state, frame(), 1000, 9));
  EXPECT_NE(sample_state_povm(r.state, frame(), 1000, 9), sample_state_povm(r.state, frame(), 1000, 10));
}

TEST(Dataset, PackRoundTrip) {
  std::vector<std::uint8_t> sym{0, 1, 2, 3, 3, 2, 1};
  const auto packed = pack_symbols(sym);
  ASSERT_EQ(packed.size(), 2u);
  EXPECT_EQ(packed[0], 0b11100100);
  EXPECT_EQ(unpack_symbols(packed.data(), sym.size()), sym);
}

TEST(Dataset, SmallGridFileRoundTrip) {
  DmrgOptions o;
  Dataset d = generate_dataset({2, 1.0, 0.0, 0.0}, {1.0}, o, 10, 77);
  ASSERT_EQ(d.groups.size(), 1u);
  EXPECT_EQ(d.total_records(), 10u);
  const auto bytes = serialize_dataset(d);
  EXPECT_EQ(bytes.size(), 4 + 4 + 4 + 4 + 8 + 8 + 5 + 8u);
  Dataset back = deserialize_dataset(bytes);
  EXPECT_EQ(serialize_dataset(back), bytes);
  EXPECT_EQ(back.groups[0], d.groups[0]);
  EXPECT_EQ(back.seed, 77u);
}

TEST(Dataset, GenerationIsDeterministic) {
  DmrgOptions o;
  o.bond_dim = 8;
  const std::vector<double> grid{0.0, 0.5, 1.5};
  const auto a = serialize_dataset(generate_dataset({6, 1.0, 0.0, 1e-9}, grid, o, 500, 5));
  const auto b = serialize_dataset(generate_dataset({6, 1.0, 0.0, 1e-9}, grid, o, 500, 5));
  EXPECT_EQ(a, b);
}

TEST(Dataset, CorruptFilesReportOffsets) {
  DmrgOptions o;
  auto bytes = serialize_dataset(generate_dataset({3, 1.0, 0.0, 0.0}, {0.5, 1.0}, o, 40, 1));
  auto truncated = bytes;
  truncated.resize(30);
  try {
    deserialize_dataset(truncated);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos);
  }
  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(deserialize_dataset(bad_version), FormatError);
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(deserialize_dataset(extra), FormatError);
}

TEST(Dataset, ErrorsNameTheField) {
  DmrgOptions o;
  o.bond_dim = 0;
  try {
    generate_dataset({4, 1.0, 0.0, 0.0}, {0.3}, o, 10, 1);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("h=0.3"), std::string::npos) << e.what();
  }
}
