#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qvae/error.hpp"
#include "qvae/lanczos.hpp"
#include "qvae/tensor.hpp"

namespace qvae {

namespace pauli {
inline RealTensor identity() { return RealTensor::matrix(2, 2, {1, 0, 0, 1}); }
inline RealTensor x() { return RealTensor::matrix(2, 2, {0, 1, 1, 0}); }
inline RealTensor z() { return RealTensor::matrix(2, 2, {1, 0, 0, -1}); }
inline ComplexTensor y() { return ComplexTensor::matrix(2, 2, {0, Complex(0, -1), Complex(0, 1), 0}); }
}  // namespace pauli

/// Open transverse-field Ising chain
///   H = -J sum_i Z_i Z_{i+1} + h_x sum_i X_i - b_z sum_i Z_i.
/// Basis state |0> is the Z = +1 eigenstate; site 0 is the most significant
/// bit of a computational-basis index.
struct TfiParams {
  std::size_t n_sites = 2;
  double coupling = 1.0;
  double field_x = 0.0;
  double symmetry_break_z = 0.0;

  void validate() const {
    if (n_sites < 2) throw ValidationError("TFI chain needs n_sites >= 2, got " + std::to_string(n_sites));
  }
  bool operator==(const TfiParams&) const = default;
};

/// Matrix product operator; site tensors have shape (left, out, in, right).
struct Mpo {
  std::vector<RealTensor> sites;

  std::size_t size() const noexcept { return sites.size(); }
  std::size_t bond(std::size_t i) const { return sites[i].shape()[3]; }
};

/// Lower-triangular finite-state-machine MPO with internal bond extent 3.
inline Mpo tfi_mpo(const TfiParams& p) {
  p.validate();
  const RealTensor id = pauli::identity(), sx = pauli::x(), sz = pauli::z();
  // W[a][b] blocks: a = left state, b = right state.
  RealTensor w({3, 2, 2, 3});
  auto put = [&](std::size_t a, std::size_t b, const RealTensor& op, double c) {
    for (std::size_t s = 0; s < 2; ++s)
      for (std::size_t t = 0; t < 2; ++t) w(a, s, t, b) += c * op(s, t);
  };
  put(0, 0, id, 1.0);
  put(1, 0, sz, 1.0);
  put(2, 0, sx, p.field_x);
  put(2, 0, sz, -p.symmetry_break_z);
  put(2, 1, sz, -p.coupling);
  put(2, 2, id, 1.0);

  Mpo mpo;
  const std::size_t n = p.n_sites;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a_lo = (i == 0) ? 2 : 0, a_hi = (i == 0) ? 3 : 3;
    const std::size_t b_lo = 0, b_hi = (i + 1 == n) ? 1 : 3;
    RealTensor site({a_hi - a_lo, 2, 2, b_hi - b_lo});
    for (std::size_t a = a_lo; a < a_hi; ++a)
      for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t t = 0; t < 2; ++t)
          for (std::size_t b = b_lo; b < b_hi; ++b) site(a - a_lo, s, t, b - b_lo) = w(a, s, t, b);
    mpo.sites.push_back(std::move(site));
  }
  return mpo;
}

/// Dense 2^N x 2^N expansion of an MPO with boundary bonds of extent 1.
inline RealTensor mpo_to_dense(const Mpo& mpo) {
  if (mpo.sites.empty()) throw DimensionError("empty MPO");
  if (mpo.sites.size() > 14) throw CapacityError("dense MPO expansion limited to 14 sites");
  // acc has shape (out..., in..., right) flattened to (D, D, r).
  RealTensor acc = mpo.sites[0];
  if (acc.shape()[0] != 1) throw DimensionError("MPO left boundary bond must be 1");
  std::size_t dim = acc.shape()[1];
  acc.reshape({dim, dim, acc.shape()[3]});
  for (std::size_t i = 1; i < mpo.sites.size(); ++i) {
    const RealTensor& w = mpo.sites[i];
    if (w.shape()[0] != acc.shape()[2]) throw DimensionError("MPO bond mismatch at site " + std::to_string(i));
    // (D, D, r) x (r, s, t, r') -> (D, D, s, t, r') -> (D, s, D, t, r')
    RealTensor next = contract(acc, w, {{2, 0}}).permuted({0, 2, 1, 3, 4});
    const std::size_t d = w.shape()[1];
    next.reshape({dim * d, dim * d, w.shape()[3]});
    acc = std::move(next);
    dim *= d;
  }
  if (acc.shape()[2] != 1) throw DimensionError("MPO right boundary bond must be 1");
  acc.reshape({dim, dim});
  return acc;
}

/// Matrix-free application of the TFI Hamiltonian to a state vector.
inline void tfi_apply(const TfiParams& p, std::span<const double> x, std::span<double> y) {
  const std::size_t n = p.n_sites;
  const std::size_t dim = std::size_t{1} << n;
  for (std::size_t s = 0; s < dim; ++s) {
    double diag = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double zi = (s >> (n - 1 - i)) & 1 ? -1.0 : 1.0;
      diag -= p.symmetry_break_z * zi;
      if (i + 1 < n) {
        const double zj = (s >> (n - 2 - i)) & 1 ? -1.0 : 1.0;
        diag -= p.coupling * zi * zj;
      }
    }
    double acc = diag * x[s];
    for (std::size_t i = 0; i < n; ++i) acc += p.field_x * x[s ^ (std::size_t{1} << (n - 1 - i))];
    y[s] = acc;
  }
}

/// Dense Hamiltonian matrix; the exact-diagonalization reference.
inline RealTensor tfi_dense(const TfiParams& p) {
  p.validate();
  if (p.n_sites > 14) throw CapacityError("dense TFI matrix limited to 14 sites, got " + std::to_string(p.n_sites));
  const std::size_t n = p.n_sites, dim = std::size_t{1} << n;
  RealTensor h({dim, dim});
  for (std::size_t s = 0; s < dim; ++s) {
    double diag = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double zi = (s >> (n - 1 - i)) & 1 ? -1.0 : 1.0;
      diag -= p.symmetry_break_z * zi;
      if (i + 1 < n) diag -= p.coupling * zi * (((s >> (n - 2 - i)) & 1) ? -1.0 : 1.0);
      h[s * dim + (s ^ (std::size_t{1} << (n - 1 - i)))] += p.field_x;
    }
    h[s * dim + s] += diag;
  }
  return h;
}

/// Fixes the global sign so the largest-magnitude amplitude is positive
/// (ties resolved by the lowest index).
inline void fix_sign(std::vector<double>& v) {
  double best = 0;
  for (double a : v) best = std::max(best, std::abs(a));
  for (double a : v)
    if (std::abs(a) >= best * (1 - 1e-9)) {
      if (a < 0)
        for (auto& x : v) x = -x;
      return;
    }
}

struct GroundState {
  double energy = 0.0;
  RealTensor state;  // length 2^N
};

/// Lowest eigenpair of the dense Hamiltonian, found by Lanczos on the
/// matrix-free operator. The state is normalized and sign-fixed.
inline GroundState ed_ground_state(const TfiParams& p, double tol = 1e-12) {
  p.validate();
  if (p.n_sites > 14) throw CapacityError("exact diagonalization limited to 14 sites, got " + std::to_string(p.n_sites));
  const std::size_t dim = std::size_t{1} << p.n_sites;
  LanczosOptions opt;
  opt.tol = tol;
  opt.krylov_dim = 80;
  opt.max_iter = 100000;
  EigenPair e = lanczos_lowest([&](std::span<const double> x, std::span<double> y) { tfi_apply(p, x, y); }, dim, opt);
  fix_sign(e.vector);
  return {e.value, RealTensor({dim}, std::move(e.vector))};
}

}  // namespace qvae
