#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "qvae/error.hpp"
#include "qvae/linalg.hpp"
#include "qvae/mps.hpp"
#include "qvae/tensor.hpp"

namespace qvae {

using Bloch = std::array<double, 3>;

/// Four-outcome qubit frame M^a = (I + s^a . sigma) / 4 together with its
/// overlap matrix T[a][b] = Tr(M^a M^b) and the dual elements
/// D^a = sum_b Tinv[a][b] M^b, so that rho = sum_a P[a] D^a.
struct PovmFrame {
  std::array<Bloch, 4> bloch;
  std::array<ComplexTensor, 4> elements;
  std::array<ComplexTensor, 4> duals;
  RealTensor overlap;
  RealTensor overlap_inverse;
  // M^a = |phi_a><phi_a| / 2 for unit-length Bloch vectors.
  std::array<std::array<Complex, 2>, 4> states;
};

struct ObservableCoeffs {
  std::string name;
  std::array<double, 4> b{};
};

namespace detail {

inline Complex trace_product(const ComplexTensor& a, const ComplexTensor& b) {
  Complex t = 0;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) t += a(i, j) * b(j, i);
  return t;
}

}  // namespace detail

inline PovmFrame frame_from_bloch(const std::array<Bloch, 4>& s) {
  PovmFrame f;
  f.bloch = s;
  for (std::size_t a = 0; a < 4; ++a) {
    const auto [x, y, z] = s[a];
    const double len = std::sqrt(x * x + y * y + z * z);
    if (std::abs(len - 1.0) > 1e-12) throw ValidationError("frame Bloch vectors must have unit length");
    f.elements[a] = ComplexTensor::matrix(2, 2, {0.25 * (1 + z), 0.25 * Complex(x, -y), 0.25 * Complex(x, y), 0.25 * (1 - z)});
    // Eigenvector of s.sigma with eigenvalue +1, normalized.
    if (z > -1 + 1e-12) {
      const double c = std::sqrt((1 + z) / 2);
      f.states[a] = {Complex(c, 0), Complex(x, y) / (2 * c)};
    } else {
      f.states[a] = {Complex(0, 0), Complex(1, 0)};
    }
  }
  ComplexTensor sum({2, 2});
  for (const auto& m : f.elements) sum += m;
  if (max_abs_diff(sum, to_complex(RealTensor::identity(2))) > 1e-12)
    throw ValidationError("frame elements do not sum to the identity");

  f.overlap = RealTensor({4, 4});
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b) f.overlap(a, b) = detail::trace_product(f.elements[a], f.elements[b]).real();
  f.overlap_inverse = inverse(f.overlap);
  for (std::size_t a = 0; a < 4; ++a) {
    f.duals[a] = ComplexTensor({2, 2});
    for (std::size_t b = 0; b < 4; ++b) {
      ComplexTensor term = f.elements[b];
      term *= Complex(f.overlap_inverse(a, b), 0);
      f.duals[a] += term;
    }
  }
  return f;
}

inline PovmFrame tetrahedral_frame() {
  const double r2 = std::sqrt(2.0);
  return frame_from_bloch({Bloch{0, 0, 1}, Bloch{2 * r2 / 3, 0, -1.0 / 3}, Bloch{-r2 / 3, std::sqrt(2.0 / 3), -1.0 / 3},
                           Bloch{-r2 / 3, -std::sqrt(2.0 / 3), -1.0 / 3}});
}

/// Born-rule outcome probabilities of a single-qubit density matrix.
inline std::array<double, 4> outcome_probabilities_single(const ComplexTensor& rho, const PovmFrame& f) {
  if (rho.shape() != Shape{2, 2}) throw DimensionError("density matrix must be 2x2, got " + shape_string(rho.shape()));
  if (std::abs(rho(0, 1) - std::conj(rho(1, 0))) > 1e-10 || std::abs(rho(0, 0).imag()) > 1e-10 ||
      std::abs(rho(1, 1).imag()) > 1e-10)
    throw ValidationError("density matrix is not Hermitian");
  const double tr = rho(0, 0).real() + rho(1, 1).real();
  if (std::abs(tr - 1) > 1e-10) throw ValidationError("density matrix trace is " + std::to_string(tr));
  const double det = (rho(0, 0) * rho(1, 1) - rho(0, 1) * rho(1, 0)).real();
  if (det < -1e-10 || rho(0, 0).real() < -1e-10 || rho(1, 1).real() < -1e-10)
    throw ValidationError("density matrix is not positive semidefinite");
  std::array<double, 4> p{};
  for (std::size_t a = 0; a < 4; ++a) p[a] = detail::trace_product(rho, f.elements[a]).real();
  return p;
}

inline std::array<double, 4> outcome_probabilities_single(const RealTensor& rho, const PovmFrame& f) {
  return outcome_probabilities_single(to_complex(rho), f);
}

/// b[a] = Tr(O D^a): the per-outcome value whose mean is <O>.
inline ObservableCoeffs observable_coeffs(const ComplexTensor& op, const PovmFrame& f, std::string name = "") {
  if (op.shape() != Shape{2, 2}) throw DimensionError("observable must be 2x2, got " + shape_string(op.shape()));
  if (std::abs(op(0, 1) - std::conj(op(1, 0))) > 1e-12) throw ValidationError("observable is not Hermitian");
  ObservableCoeffs c{std::move(name), {}};
  for (std::size_t a = 0; a < 4; ++a) c.b[a] = detail::trace_product(op, f.duals[a]).real();
  return c;
}

inline ObservableCoeffs observable_coeffs(const RealTensor& op, const PovmFrame& f, std::string name = "") {
  return observable_coeffs(to_complex(op), f, std::move(name));
}

namespace detail {

// Unitary on a doubled bond (a, a') whose columns are |aa>, (|ab>+|ba>)/sqrt2
// and i(|ab>-|ba>)/sqrt2 for a < b. Swapping the two copies conjugates the
// mass tensor of a real state, so this basis makes it real. Each column has
// at most two entries.
struct GaugeColumn {
  std::size_t i0, i1;
  Complex c0, c1;
};

inline std::vector<GaugeColumn> real_gauge(std::size_t chi) {
  std::vector<GaugeColumn> cols;
  const double r = M_SQRT1_2;
  for (std::size_t a = 0; a < chi; ++a) {
    cols.push_back({a * chi + a, a * chi + a, Complex(1, 0), Complex(0, 0)});
    for (std::size_t b = a + 1; b < chi; ++b) {
      cols.push_back({a * chi + b, b * chi + a, Complex(r, 0), Complex(r, 0)});
      cols.push_back({a * chi + b, b * chi + a, Complex(0, r), Complex(0, -r)});
    }
  }
  return cols;
}

}  // namespace detail

/// Mass-function MPS: site tensors P[(a,a'), alpha, (b,b')] whose full
/// contraction gives P[alpha_1..alpha_N] = <psi| (x) M^{alpha_i} |psi>.
/// Bond extents are squared. The gauge above is applied on every doubled
/// bond, so every entry is real.
inline Mps mass_function_mps(const Mps& psi, const PovmFrame& f) {
  psi.validate();
  for (std::size_t i = 0; i < psi.size(); ++i)
    if (psi.phys(i) != 2) throw DimensionError("mass function needs qubit sites");
  Mps out;
  for (std::size_t i = 0; i < psi.size(); ++i) {
    const RealTensor& a = psi.sites[i];
    const std::size_t l = a.shape()[0], r = a.shape()[2];
    const auto gl = detail::real_gauge(l), gr = detail::real_gauge(r);
    // c[a, b, a', b', alpha] = sum_{s,t} A[a,s,b] M^alpha[s,t] A[a',t,b']
    std::vector<Complex> c(l * r * l * r * 4);
    for (std::size_t x = 0; x < l; ++x)
      for (std::size_t y = 0; y < r; ++y)
        for (std::size_t x2 = 0; x2 < l; ++x2)
          for (std::size_t y2 = 0; y2 < r; ++y2) {
            Complex* dst = &c[(((x * r + y) * l + x2) * r + y2) * 4];
            for (std::size_t s = 0; s < 2; ++s)
              for (std::size_t t = 0; t < 2; ++t) {
                const double w = a(x, s, y) * a(x2, t, y2);
                if (w == 0) continue;
                for (std::size_t al = 0; al < 4; ++al) dst[al] += w * f.elements[al](s, t);
              }
          }
    auto at = [&](std::size_t left_pair, std::size_t right_pair, std::size_t al) {
      const std::size_t x = left_pair / l, x2 = left_pair % l, y = right_pair / r, y2 = right_pair % r;
      return c[(((x * r + y) * l + x2) * r + y2) * 4 + al];
    };
    RealTensor p({gl.size(), 4, gr.size()});
    double big = 0, leak = 0;
    for (std::size_t pl = 0; pl < gl.size(); ++pl)
      for (std::size_t pr = 0; pr < gr.size(); ++pr)
        for (std::size_t al = 0; al < 4; ++al) {
          const auto& u = gl[pl];
          const auto& v = gr[pr];
          Complex acc = 0;
          const std::size_t li[2] = {u.i0, u.i1}, ri[2] = {v.i0, v.i1};
          const Complex lc[2] = {std::conj(u.c0), std::conj(u.c1)}, rc[2] = {v.c0, v.c1};
          for (int q = 0; q < 2; ++q)
            for (int w = 0; w < 2; ++w)
              if (lc[q] != Complex(0) && rc[w] != Complex(0)) acc += lc[q] * at(li[q], ri[w], al) * rc[w];
          p(pl, al, pr) = acc.real();
          big = std::max(big, std::abs(acc));
          leak = std::max(leak, std::abs(acc.imag()));
        }
    if (leak > 1e-12 * std::max(1.0, big))
      throw NumericalError("mass tensor at site " + std::to_string(i) + " has imaginary residue " + std::to_string(leak));
    out.sites.push_back(std::move(p));
  }
  return out;
}

/// Sum of the mass MPS over all outcomes.
inline double mass_total(const Mps& p) {
  p.validate();
  std::vector<double> v{1.0};
  for (const auto& a : p.sites) {
    const std::size_t l = a.shape()[0], d = a.shape()[1], r = a.shape()[2];
    std::vector<double> next(r, 0.0);
    for (std::size_t x = 0; x < l; ++x)
      for (std::size_t s = 0; s < d; ++s)
        for (std::size_t y = 0; y < r; ++y) next[y] += v[x] * a(x, s, y);
    v = std::move(next);
  }
  return v[0];
}

/// Exact single-site marginals of a mass MPS.
inline std::vector<std::array<double, 4>> mass_marginals(const Mps& p) {
  p.validate();
  const std::size_t n = p.size();
  std::vector<std::vector<double>> right(n + 1);
  right[n] = {1.0};
  for (std::size_t i = n; i-- > 0;) {
    const auto& a = p.sites[i];
    const std::size_t l = a.shape()[0], d = a.shape()[1], r = a.shape()[2];
    right[i].assign(l, 0.0);
    for (std::size_t x = 0; x < l; ++x)
      for (std::size_t s = 0; s < d; ++s)
        for (std::size_t y = 0; y < r; ++y) right[i][x] += a(x, s, y) * right[i + 1][y];
  }
  std::vector<std::array<double, 4>> out(n);
  std::vector<double> left{1.0};
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = p.sites[i];
    const std::size_t l = a.shape()[0], r = a.shape()[2];
    if (a.shape()[1] != 4) throw DimensionError("mass MPS must have physical extent 4");
    std::vector<double> next(r, 0.0);
    for (std::size_t x = 0; x < l; ++x)
      for (std::size_t s = 0; s < 4; ++s)
        for (std::size_t y = 0; y < r; ++y) {
          const double w = left[x] * a(x, s, y);
          out[i][s] += w * right[i + 1][y];
          next[y] += w;
        }
    left = std::move(next);
  }
  return out;
}

/// Full mass table of a mass MPS (outcome index: site 0 most significant
/// base-4 digit).
inline std::vector<double> mass_table(const Mps& p) {
  p.validate();
  if (p.size() > 8) throw CapacityError("mass table limited to 8 sites, got " + std::to_string(p.size()));
  RealTensor acc({1, 1}, std::vector<double>{1.0});
  for (const auto& a : p.sites) {
    RealTensor next = contract(acc, a, {{1, 0}});
    acc = next.reshaped({next.shape()[0] * next.shape()[1], next.shape()[2]});
  }
  return {acc.data().begin(), acc.data().end()};
}

/// P[alpha] = Tr(rho (x) M^{alpha_i}) for rho = |psi><psi|, by mode-wise
/// application of the frame to the density tensor.
inline std::vector<double> enumerate_exact(const RealTensor& state, const PovmFrame& f) {
  const std::size_t dim = state.size();
  std::size_t n = 0;
  while ((std::size_t{1} << n) < dim) ++n;
  if ((std::size_t{1} << n) != dim || n < 1) throw DimensionError("state length must be a power of two");
  if (n > 8) throw CapacityError("exact enumeration limited to 8 sites, got " + std::to_string(n));
  const std::size_t size = std::size_t{1} << (2 * n);
  // Digit i of index (base 4, site 0 most significant) holds 2*s_i + t_i.
  std::vector<Complex> rho(size);
  for (std::size_t idx = 0; idx < size; ++idx) {
    std::size_t s = 0, t = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t digit = (idx >> (2 * (n - 1 - i))) & 3;
      s = (s << 1) | (digit >> 1);
      t = (t << 1) | (digit & 1);
    }
    rho[idx] = state[s] * state[t];
  }
  // K[alpha][2s+t] = M^alpha[t][s], so that sum_{s,t} rho_st M_ts = Tr(rho M).
  std::array<std::array<Complex, 4>, 4> k;
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t s = 0; s < 2; ++s)
      for (std::size_t t = 0; t < 2; ++t) k[a][2 * s + t] = f.elements[a](t, s);
  std::vector<Complex> tmp(size);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t stride = std::size_t{1} << (2 * (n - 1 - i));
    for (std::size_t idx = 0; idx < size; ++idx) {
      const std::size_t digit = (idx / stride) & 3, base = idx - digit * stride;
      Complex acc = 0;
      for (std::size_t q = 0; q < 4; ++q) acc += k[digit][q] * rho[base + q * stride];
      tmp[idx] = acc;
    }
    rho.swap(tmp);
  }
  std::vector<double> p(size);
  for (std::size_t idx = 0; idx < size; ++idx) p[idx] = rho[idx].real();
  return p;
}

/// rho = sum_alpha mass[alpha] (x) D^{alpha_i}. Hermitian with unit trace for
/// any normalized table; positive only when the table is physical.
inline ComplexTensor reconstruct_density_small(const std::vector<double>& mass, const PovmFrame& f, std::size_t n) {
  if (n < 1 || n > 8) throw CapacityError("density reconstruction limited to 1..8 sites, got " + std::to_string(n));
  const std::size_t size = std::size_t{1} << (2 * n);
  if (mass.size() != size) throw DimensionError("mass table length does not match 4^n");
  std::vector<Complex> t(mass.begin(), mass.end());
  std::array<std::array<Complex, 4>, 4> k;  // k[2s+t][alpha] = D^alpha[s][t]
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t s = 0; s < 2; ++s)
      for (std::size_t u = 0; u < 2; ++u) k[2 * s + u][a] = f.duals[a](s, u);
  std::vector<Complex> tmp(size);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t stride = std::size_t{1} << (2 * (n - 1 - i));
    for (std::size_t idx = 0; idx < size; ++idx) {
      const std::size_t digit = (idx / stride) & 3, base = idx - digit * stride;
      Complex acc = 0;
      for (std::size_t q = 0; q < 4; ++q) acc += k[digit][q] * t[base + q * stride];
      tmp[idx] = acc;
    }
    t.swap(tmp);
  }
  const std::size_t dim = std::size_t{1} << n;
  ComplexTensor rho({dim, dim});
  for (std::size_t idx = 0; idx < size; ++idx) {
    std::size_t s = 0, u = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t digit = (idx >> (2 * (n - 1 - i))) & 3;
      s = (s << 1) | (digit >> 1);
      u = (u << 1) | (digit & 1);
    }
    rho(s, u) = t[idx];
  }
  return rho;
}

}  // namespace qvae
