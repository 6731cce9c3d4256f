#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "qvae/cvae.hpp"
#include "qvae/error.hpp"
#include "qvae/povm.hpp"
#include "qvae/sampler.hpp"

namespace qvae {

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t count = 0;
};

namespace detail {

// Streaming mean and sample variance.
struct Moments {
  double mean = 0, m2 = 0;
  std::size_t n = 0;
  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  Estimate estimate() const {
    const double var = n > 1 ? m2 / static_cast<double>(n - 1) : 0.0;
    return {mean, std::sqrt(var / static_cast<double>(n)), n};
  }
};

inline void require_samples(const Samples& s) {
  if (s.count() == 0) throw ValidationError("estimator needs at least one sample");
}

inline void require_site(const Samples& s, std::size_t site) {
  if (site >= s.n_sites)
    throw IndexError("site " + std::to_string(site) + " out of range for " + std::to_string(s.n_sites) + " sites");
}

}  // namespace detail

/// Mean of b[alpha_site] with its i.i.d. standard error.
inline Estimate one_point(const Samples& s, const ObservableCoeffs& c, std::size_t site) {
  detail::require_samples(s);
  detail::require_site(s, site);
  detail::Moments m;
  for (std::size_t k = 0; k < s.count(); ++k) m.add(c.b[s(k, site)]);
  return m.estimate();
}

inline Estimate two_point(const Samples& s, const ObservableCoeffs& ca, std::size_t site_a, const ObservableCoeffs& cb,
                          std::size_t site_b) {
  detail::require_samples(s);
  detail::require_site(s, site_a);
  detail::require_site(s, site_b);
  if (site_a == site_b) throw IndexError("two-point estimator needs distinct sites");
  detail::Moments m;
  for (std::size_t k = 0; k < s.count(); ++k) m.add(ca.b[s(k, site_a)] * cb.b[s(k, site_b)]);
  return m.estimate();
}

/// (1/N) sum_i <O_i>. The per-record site average is the sampled quantity,
/// so the error bar includes inter-site correlations.
inline Estimate total_magnetization(const Samples& s, const ObservableCoeffs& c) {
  detail::require_samples(s);
  detail::Moments m;
  const double inv = 1.0 / static_cast<double>(s.n_sites);
  for (std::size_t k = 0; k < s.count(); ++k) {
    double acc = 0;
    for (std::size_t i = 0; i < s.n_sites; ++i) acc += c.b[s(k, i)];
    m.add(acc * inv);
  }
  return m.estimate();
}

/// Probability-weighted one-point value over a full mass table.
inline double weighted_one_point(const std::vector<double>& table, std::size_t n, const ObservableCoeffs& c,
                                 std::size_t site) {
  if (table.size() != (std::size_t{1} << (2 * n))) throw DimensionError("mass table length does not match 4^n");
  if (site >= n) throw IndexError("site out of range");
  double acc = 0;
  for (std::size_t idx = 0; idx < table.size(); ++idx) acc += table[idx] * c.b[(idx >> (2 * (n - 1 - site))) & 3];
  return acc;
}

inline double weighted_two_point(const std::vector<double>& table, std::size_t n, const ObservableCoeffs& ca,
                                 std::size_t site_a, const ObservableCoeffs& cb, std::size_t site_b) {
  if (table.size() != (std::size_t{1} << (2 * n))) throw DimensionError("mass table length does not match 4^n");
  if (site_a >= n || site_b >= n) throw IndexError("site out of range");
  if (site_a == site_b) throw IndexError("two-point estimator needs distinct sites");
  double acc = 0;
  for (std::size_t idx = 0; idx < table.size(); ++idx)
    acc += table[idx] * ca.b[(idx >> (2 * (n - 1 - site_a))) & 3] * cb.b[(idx >> (2 * (n - 1 - site_b))) & 3];
  return acc;
}

struct Renyi2Estimate {
  double value = 0.0;      // -log(purity); NaN when flagged
  double std_error = 0.0;  // propagated through the log; NaN when flagged
  double purity = 0.0;
  double purity_error = 0.0;
  std::size_t pairs = 0;
  bool flagged = false;    // purity estimate <= 0
};

/// Renyi-2 entropy of the first n_left sites from measurement records.
/// Tr(rho^2) is the expectation of prod_i Tinv[a_i, a'_i] over two
/// independent records a, a'. The default pairs records (0,1), (2,3), ...;
/// `all_pairs` uses the U-statistic over every unordered pair.
inline Renyi2Estimate renyi2_pair_estimator(const Samples& s, std::size_t n_left, const PovmFrame& f,
                                            bool all_pairs = false) {
  if (n_left < 1 || n_left >= s.n_sites)
    throw IndexError("n_left must be in [1, " + std::to_string(s.n_sites - 1) + "], got " + std::to_string(n_left));
  const std::size_t k = s.count();
  Renyi2Estimate r;
  if (!all_pairs) {
    if (k < 2 || k % 2 != 0) throw ValidationError("pair estimator needs an even number of records, got " + std::to_string(k));
    detail::Moments m;
    for (std::size_t p = 0; p + 1 < k; p += 2) {
      double prod = 1;
      for (std::size_t i = 0; i < n_left; ++i) prod *= f.overlap_inverse(s(p, i), s(p + 1, i));
      m.add(prod);
    }
    const Estimate e = m.estimate();
    r.purity = e.value;
    r.purity_error = e.std_error;
    r.pairs = k / 2;
  } else {
    if (k < 2) throw ValidationError("all-pairs estimator needs at least two records");
    if (n_left > 10) throw CapacityError("all-pairs estimator limited to n_left <= 10");
    const std::size_t size = std::size_t{1} << (2 * n_left);
    std::vector<double> counts(size, 0.0);
    for (std::size_t rec = 0; rec < k; ++rec) {
      std::size_t idx = 0;
      for (std::size_t i = 0; i < n_left; ++i) idx = idx * 4 + s(rec, i);
      counts[idx] += 1;
    }
    // kc = (Tinv (x) ... (x) Tinv) counts, mode by mode.
    std::vector<double> kc = counts, tmp(size);
    for (std::size_t i = 0; i < n_left; ++i) {
      const std::size_t stride = std::size_t{1} << (2 * (n_left - 1 - i));
      for (std::size_t idx = 0; idx < size; ++idx) {
        const std::size_t digit = (idx / stride) & 3, base = idx - digit * stride;
        double acc = 0;
        for (std::size_t q = 0; q < 4; ++q) acc += f.overlap_inverse(digit, q) * kc[base + q * stride];
        tmp[idx] = acc;
      }
      kc.swap(tmp);
    }
    const double kd = static_cast<double>(k);
    double total = 0, self = 0;
    detail::Moments h1;
    for (std::size_t idx = 0; idx < size; ++idx) {
      if (counts[idx] == 0) continue;
      double diag = 1;
      for (std::size_t i = 0; i < n_left; ++i) {
        const std::size_t a = (idx >> (2 * (n_left - 1 - i))) & 3;
        diag *= f.overlap_inverse(a, a);
      }
      total += counts[idx] * kc[idx];
      self += counts[idx] * diag;
      // Projection of the kernel onto one record, excluding the self pair.
      const double proj = (kc[idx] - diag) / (kd - 1);
      for (std::size_t c = 0; c < static_cast<std::size_t>(counts[idx]); ++c) h1.add(proj);
    }
    r.purity = (total - self) / (kd * (kd - 1));
    const Estimate e = h1.estimate();
    r.purity_error = 2 * e.std_error;
    r.pairs = k * (k - 1) / 2;
  }
  if (r.purity <= 0) {
    r.flagged = true;
    r.value = std::nan("");
    r.std_error = std::nan("");
  } else {
    r.value = -std::log(r.purity);
    r.std_error = r.purity_error / r.purity;
  }
  return r;
}

namespace detail {

inline void require_table(const std::vector<double>& t, const char* name) {
  double sum = 0;
  for (double x : t) {
    if (x < 0 || !std::isfinite(x)) throw ValidationError(std::string(name) + " has a negative or non-finite entry");
    sum += x;
  }
  if (std::abs(sum - 1) > 1e-6) throw ValidationError(std::string(name) + " sums to " + std::to_string(sum));
}

}  // namespace detail

/// sum_alpha sqrt(p_a[alpha] p_b[alpha]).
inline double bhattacharyya(const std::vector<double>& pa, const std::vector<double>& pb) {
  if (pa.size() != pb.size()) throw DimensionError("mass tables differ in length");
  detail::require_table(pa, "first table");
  detail::require_table(pb, "second table");
  double bc = 0;
  for (std::size_t i = 0; i < pa.size(); ++i) bc += std::sqrt(pa[i] * pb[i]);
  return std::min(1.0, bc);
}

inline double total_variation(const std::vector<double>& pa, const std::vector<double>& pb) {
  if (pa.size() != pb.size()) throw DimensionError("mass tables differ in length");
  double tv = 0;
  for (std::size_t i = 0; i < pa.size(); ++i) tv += std::abs(pa[i] - pb[i]);
  return 0.5 * tv;
}

struct ChiSquare {
  double statistic = 0.0;
  std::size_t dof = 0;
  std::size_t cells = 0;
  double p_value = 1.0;
};

/// Pearson goodness of fit of observed counts against expected
/// probabilities. Cells with expected count below 5 are pooled into one
/// cell (merged into the smallest regular cell if the pool is still below 5).
inline ChiSquare chi_square_test(const std::vector<double>& counts, const std::vector<double>& probs) {
  if (counts.size() != probs.size()) throw DimensionError("count and probability tables differ in length");
  double k = 0;
  for (double c : counts) k += c;
  if (!(k > 0)) throw ValidationError("chi-square test needs a positive total count");
  std::vector<std::pair<double, double>> cells;  // (observed, expected)
  std::pair<double, double> pool{0, 0};
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double e = probs[i] * k;
    if (e >= 5)
      cells.emplace_back(counts[i], e);
    else {
      pool.first += counts[i];
      pool.second += e;
    }
  }
  if (pool.second > 0 || pool.first > 0) {
    if (pool.second >= 5 || cells.empty()) {
      cells.push_back(pool);
    } else {
      auto it = std::min_element(cells.begin(), cells.end(),
                                 [](const auto& a, const auto& b) { return a.second < b.second; });
      it->first += pool.first;
      it->second += pool.second;
    }
  }
  ChiSquare r;
  r.cells = cells.size();
  for (const auto& [o, e] : cells) {
    if (e <= 0) {
      if (o > 0) {
        r.statistic = INFINITY;
        r.p_value = 0;
        r.dof = cells.size() > 1 ? cells.size() - 1 : 0;
        return r;
      }
      continue;
    }
    r.statistic += (o - e) * (o - e) / e;
  }
  r.dof = cells.size() > 1 ? cells.size() - 1 : 0;
  r.p_value = r.dof > 0 ? boost::math::gamma_q(0.5 * static_cast<double>(r.dof), 0.5 * r.statistic) : 1.0;
  return r;
}

/// Outcome-string counts of a sample set (length 4^N).
inline std::vector<double> outcome_counts(const Samples& s) {
  if (s.n_sites > 10) throw CapacityError("outcome histogram limited to 10 sites");
  std::vector<double> c(std::size_t{1} << (2 * s.n_sites), 0.0);
  for (std::size_t r = 0; r < s.count(); ++r) c[outcome_index(s.record(r))] += 1;
  return c;
}

enum class MassTableMode { empirical, latent };

/// Model mass function over all 4^n outcome strings with a per-entry
/// standard error.
struct MassTable {
  std::vector<double> p;
  std::vector<double> std_error;
  std::size_t draws = 0;
};

/// empirical: outcome frequencies of `draws` generated records.
/// latent: (1/K) sum_z prod_i pi_{i, alpha_i}(z, h) over `draws` latent points.
inline MassTable vae_mass_table(const CvaeModel& m, double h, MassTableMode mode, std::size_t draws, std::uint64_t seed) {
  const std::size_t n = m.n_sites;
  if (n > 8) throw CapacityError("model mass table limited to 8 sites");
  if (draws < 1) throw ValidationError("mass table needs at least one draw");
  const std::size_t size = std::size_t{1} << (2 * n);
  MassTable t{std::vector<double>(size, 0.0), std::vector<double>(size, 0.0), draws};
  const double kd = static_cast<double>(draws);
  if (mode == MassTableMode::empirical) {
    t.p = outcome_counts(generate(m, h, draws, seed));
    for (std::size_t i = 0; i < size; ++i) {
      t.p[i] /= kd;
      t.std_error[i] = std::sqrt(t.p[i] * (1 - t.p[i]) / kd);
    }
    return t;
  }
  std::vector<double> sq(size, 0.0), prod(size);
  Rng rng(seed);
  for (std::size_t start = 0; start < draws; start += 1024) {
    const std::size_t len = std::min<std::size_t>(1024, draws - start);
    Matrix z(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(n));
    for (Eigen::Index r = 0; r < z.rows(); ++r)
      for (Eigen::Index i = 0; i < z.cols(); ++i) z(r, i) = rng.normal();
    const Matrix lp = detail::block_log_softmax(mlp_forward(m.decoder, detail::decoder_input(m, z, h)));
    for (std::size_t r = 0; r < len; ++r) {
      // Outer product over sites, site 0 most significant.
      std::size_t filled = 1;
      prod[0] = 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t q = filled; q-- > 0;)
          for (std::size_t j = 4; j-- > 0;) prod[q * 4 + j] = prod[q] * std::exp(lp(r, 4 * i + j));
        filled *= 4;
      }
      for (std::size_t a = 0; a < size; ++a) {
        t.p[a] += prod[a];
        sq[a] += prod[a] * prod[a];
      }
    }
  }
  for (std::size_t a = 0; a < size; ++a) {
    t.p[a] /= kd;
    const double var = draws > 1 ? std::max(0.0, sq[a] / kd - t.p[a] * t.p[a]) * kd / (kd - 1) : 0.0;
    t.std_error[a] = std::sqrt(var / kd);
  }
  return t;
}

}  // namespace qvae
