#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qvae/error.hpp"
#include "qvae/mps.hpp"
#include "qvae/povm.hpp"
#include "qvae/rng.hpp"

namespace qvae {

/// K outcome records of N symbols each, stored record-major.
struct Samples {
  std::size_t n_sites = 0;
  std::vector<std::uint8_t> symbols;

  Samples() = default;
  Samples(std::size_t n, std::size_t count) : n_sites(n), symbols(n * count, 0) {}

  std::size_t count() const { return n_sites ? symbols.size() / n_sites : 0; }
  std::span<const std::uint8_t> record(std::size_t k) const { return {symbols.data() + k * n_sites, n_sites}; }
  std::span<std::uint8_t> record(std::size_t k) { return {symbols.data() + k * n_sites, n_sites}; }
  std::uint8_t operator()(std::size_t k, std::size_t site) const { return symbols[k * n_sites + site]; }
  bool operator==(const Samples&) const = default;
};

/// Outcome index with site 0 as the most significant base-4 digit; the value
/// used to address mass tables.
inline std::size_t outcome_index(std::span<const std::uint8_t> rec) {
  std::size_t idx = 0;
  for (std::uint8_t s : rec) idx = idx * 4 + s;
  return idx;
}

namespace detail {

inline std::size_t draw_categorical(const double* p, std::size_t n, Rng& rng) {
  double u = rng.uniform();
  for (std::size_t k = 0; k + 1 < n; ++k) {
    if (u < p[k]) return k;
    u -= p[k];
  }
  return n - 1;
}

// Clips round-off negatives and normalizes; throws on genuinely negative mass.
inline void clean_conditional(std::array<double, 4>& q, std::size_t site) {
  double total = 0, scale = 0;
  for (double x : q) {
    total += x;
    scale += std::abs(x);
  }
  for (double& x : q) {
    if (x < -1e-10 * scale)
      throw NumericalError("negative conditional probability " + std::to_string(x / scale) + " at site " +
                           std::to_string(site));
    if (x < 0) x = 0;
  }
  total = q[0] + q[1] + q[2] + q[3];
  if (!(total > 0)) throw NumericalError("conditional mass vanished at site " + std::to_string(site));
  for (double& x : q) x /= total;
}

}  // namespace detail

/// Ancestral sampling from a mass-function MPS. Site N-1 is drawn first from
/// its marginal, then each earlier site from its conditional given the
/// already-drawn sites to its right.
inline Samples sample_chain(const Mps& p, std::size_t k, std::uint64_t seed) {
  p.validate();
  const std::size_t n = p.size();
  for (std::size_t i = 0; i < n; ++i)
    if (p.phys(i) != 4) throw DimensionError("sample_chain needs physical extent 4");
  const double total = mass_total(p);
  if (std::abs(total - 1) > 1e-8) throw ValidationError("mass MPS sums to " + std::to_string(total) + ", not 1");

  // g[i][alpha] = (left marginal up to i) . P_i[:, alpha, :], a row vector.
  std::vector<std::array<std::vector<double>, 4>> g(n);
  std::vector<double> left{1.0};
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = p.sites[i];
    const std::size_t l = a.shape()[0], r = a.shape()[2];
    std::vector<double> next(r, 0.0);
    for (std::size_t al = 0; al < 4; ++al) {
      g[i][al].assign(r, 0.0);
      for (std::size_t x = 0; x < l; ++x)
        for (std::size_t y = 0; y < r; ++y) g[i][al][y] += left[x] * a(x, al, y);
      for (std::size_t y = 0; y < r; ++y) next[y] += g[i][al][y];
    }
    left = std::move(next);
  }

  Rng rng(seed);
  Samples out(n, k);
  std::vector<double> v, tmp;
  for (std::size_t rec = 0; rec < k; ++rec) {
    v.assign(1, 1.0);
    for (std::size_t i = n; i-- > 0;) {
      const auto& a = p.sites[i];
      const std::size_t l = a.shape()[0], r = a.shape()[2];
      std::array<double, 4> q{};
      for (std::size_t al = 0; al < 4; ++al)
        for (std::size_t y = 0; y < r; ++y) q[al] += g[i][al][y] * v[y];
      detail::clean_conditional(q, i);
      const auto al = detail::draw_categorical(q.data(), 4, rng);
      out.symbols[rec * n + i] = static_cast<std::uint8_t>(al);
      if (i == 0) break;
      tmp.assign(l, 0.0);
      double big = 0;
      for (std::size_t x = 0; x < l; ++x) {
        double acc = 0;
        for (std::size_t y = 0; y < r; ++y) acc += a(x, al, y) * v[y];
        tmp[x] = acc;
        big = std::max(big, std::abs(acc));
      }
      for (double& x : tmp) x /= big;
      v.swap(tmp);
    }
  }
  return out;
}

/// Same distribution as sample_chain(mass_function_mps(psi, f), ...), drawn
/// directly from the state MPS. The frame elements are rank one,
/// M^a = |phi_a><phi_a|/2, so conditioning on an outcome collapses the
/// right-hand part to a single bond vector and each step costs O(chi^2)
/// instead of O(chi^4).
inline Samples sample_state_povm(const Mps& psi, const PovmFrame& f, std::size_t k, std::uint64_t seed) {
  psi.validate();
  const std::size_t n = psi.size();
  for (std::size_t i = 0; i < n; ++i)
    if (psi.phys(i) != 2) throw DimensionError("sample_state_povm needs qubit sites");
  for (const auto& s : f.bloch)
    if (std::abs(s[0] * s[0] + s[1] * s[1] + s[2] * s[2] - 1) > 1e-12)
      throw ValidationError("direct sampling needs a rank-one frame");
  Mps m = psi;
  move_center(m, n - 1);
  normalize(m);

  Rng rng(seed);
  Samples out(n, k);
  std::vector<Complex> v, u0, u1;
  for (std::size_t rec = 0; rec < k; ++rec) {
    v.assign(1, Complex(1, 0));
    for (std::size_t i = n; i-- > 0;) {
      const auto& a = m.sites[i];
      const std::size_t l = a.shape()[0], r = a.shape()[2];
      u0.assign(l, 0.0);
      u1.assign(l, 0.0);
      const double* d = a.data().data();
      for (std::size_t x = 0; x < l; ++x) {
        Complex s0 = 0, s1 = 0;
        const double* row0 = d + (x * 2) * r;
        const double* row1 = row0 + r;
        for (std::size_t y = 0; y < r; ++y) {
          s0 += row0[y] * v[y];
          s1 += row1[y] * v[y];
        }
        u0[x] = s0;
        u1[x] = s1;
      }
      std::array<double, 4> q{};
      for (std::size_t al = 0; al < 4; ++al) {
        const Complex c0 = std::conj(f.states[al][0]), c1 = std::conj(f.states[al][1]);
        double nrm = 0;
        for (std::size_t x = 0; x < l; ++x) nrm += std::norm(c0 * u0[x] + c1 * u1[x]);
        q[al] = 0.5 * nrm;
      }
      detail::clean_conditional(q, i);
      const auto al = detail::draw_categorical(q.data(), 4, rng);
      out.symbols[rec * n + i] = static_cast<std::uint8_t>(al);
      if (i == 0) break;
      const Complex c0 = std::conj(f.states[al][0]), c1 = std::conj(f.states[al][1]);
      v.resize(l);
      double nrm = 0;
      for (std::size_t x = 0; x < l; ++x) {
        v[x] = c0 * u0[x] + c1 * u1[x];
        nrm += std::norm(v[x]);
      }
      const double inv = 1.0 / std::sqrt(nrm);
      for (auto& x : v) x *= inv;
    }
  }
  return out;
}

/// Empirical frequency table over all 4^N outcome strings.
inline std::vector<double> empirical_table(const Samples& s) {
  if (s.n_sites > 10) throw CapacityError("empirical table limited to 10 sites");
  std::vector<double> t(std::size_t{1} << (2 * s.n_sites), 0.0);
  const std::size_t k = s.count();
  if (k == 0) throw ValidationError("empirical table of an empty sample set");
  for (std::size_t r = 0; r < k; ++r) t[outcome_index(s.record(r))] += 1.0;
  for (double& x : t) x /= static_cast<double>(k);
  return t;
}

}  // namespace qvae
