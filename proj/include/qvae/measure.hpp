#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "qvae/error.hpp"
#include "qvae/mps.hpp"
#include "qvae/tfi.hpp"

namespace qvae {

namespace detail {

// env(b, b') <- sum A(a, s, b) env(a, a') B(a', s, b')
inline RealTensor transfer_left(const RealTensor& env, const RealTensor& bra, const RealTensor& ket) {
  RealTensor t = contract(env, ket, {{1, 0}});        // (a, s, b')
  return contract(bra, t, {{0, 0}, {1, 1}});          // (b, b')
}

// Applies a single-site operator to the physical leg: (op A)(a, s, b).
inline RealTensor apply_site_op(const RealTensor& op, const RealTensor& a) {
  if (op.rank() != 2 || op.shape()[0] != a.shape()[1] || op.shape()[1] != a.shape()[1])
    throw DimensionError("site operator " + shape_string(op.shape()) + " does not match physical extent " +
                         std::to_string(a.shape()[1]));
  return contract(op, a, {{1, 1}}).permuted({1, 0, 2});
}

}  // namespace detail

/// <psi| prod_k op_k |psi> / <psi|psi> for operators on distinct sites.
inline double expect_product(const Mps& psi, const std::map<std::size_t, RealTensor>& ops) {
  psi.validate();
  for (const auto& [site, op] : ops)
    if (site >= psi.size()) throw IndexError("site " + std::to_string(site) + " out of range for N=" + std::to_string(psi.size()));
  RealTensor env({1, 1}, std::vector<double>{1.0});
  RealTensor norm_env = env;
  for (std::size_t i = 0; i < psi.size(); ++i) {
    const RealTensor& a = psi.sites[i];
    auto it = ops.find(i);
    env = detail::transfer_left(env, a, it == ops.end() ? a : detail::apply_site_op(it->second, a));
    norm_env = detail::transfer_left(norm_env, a, a);
  }
  return env[0] / norm_env[0];
}

inline double expect_local(const Mps& psi, const RealTensor& op, std::size_t site) {
  return expect_product(psi, {{site, op}});
}

inline double expect_two_point(const Mps& psi, const RealTensor& op_a, std::size_t site_a, const RealTensor& op_b,
                               std::size_t site_b) {
  if (site_a == site_b) throw IndexError("two-point expectation needs distinct sites");
  return expect_product(psi, {{site_a, op_a}, {site_b, op_b}});
}

/// <psi|H|psi> / <psi|psi> for an MPO.
inline double mpo_expectation(const Mps& psi, const Mpo& h) {
  if (psi.size() != h.size()) throw DimensionError("MPO and MPS lengths differ");
  RealTensor env({1, 1, 1}, std::vector<double>{1.0});  // (bra, w, ket)
  for (std::size_t i = 0; i < psi.size(); ++i) {
    const RealTensor& a = psi.sites[i];
    RealTensor t1 = contract(env, a, {{0, 0}});                  // (w, a', s, b)
    RealTensor t2 = contract(t1, h.sites[i], {{0, 0}, {2, 1}});  // (a', b, t, w')
    env = contract(t2, a, {{0, 0}, {2, 1}});                     // (b, w', b')
  }
  return env[0] / overlap(psi, psi);
}

/// Density matrix of the first n_left sites (dense, 2^n x 2^n).
inline RealTensor reduced_density(const Mps& psi, std::size_t n_left) {
  psi.validate();
  if (n_left < 1 || n_left > psi.size()) throw IndexError("n_left out of range");
  if (n_left > 10) throw CapacityError("reduced density limited to 10 sites, got " + std::to_string(n_left));
  // Right environment of the traced-out part.
  RealTensor right({1, 1}, std::vector<double>{1.0});
  for (std::size_t i = psi.size(); i-- > n_left;) {
    const RealTensor& a = psi.sites[i];
    RealTensor t = contract(a, right, {{2, 0}});       // (b, s, c')
    right = contract(t, a, {{1, 1}, {2, 2}});          // (b, b')
  }
  RealTensor phi = psi.sites[0].reshaped({psi.phys(0), psi.right_bond(0)});
  for (std::size_t i = 1; i < n_left; ++i) {
    RealTensor next = contract(phi, psi.sites[i], {{1, 0}});
    phi = next.reshaped({next.shape()[0] * next.shape()[1], next.shape()[2]});
  }
  RealTensor rho = contract(contract(phi, right, {{1, 0}}), phi, {{1, 1}});
  double tr = 0;
  const std::size_t d = rho.shape()[0];
  for (std::size_t i = 0; i < d; ++i) tr += rho[i * d + i];
  rho *= 1.0 / tr;
  return rho;
}

/// S_2 = -log Tr(rho_n^2) of the first n_left sites.
inline double renyi2_exact(const Mps& psi, std::size_t n_left) {
  const RealTensor rho = reduced_density(psi, n_left);
  double purity = 0;
  for (double x : rho.data()) purity += x * x;
  return -std::log(purity);
}

}  // namespace qvae
