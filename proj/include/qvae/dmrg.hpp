#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qvae/error.hpp"
#include "qvae/lanczos.hpp"
#include "qvae/linalg.hpp"
#include "qvae/measure.hpp"
#include "qvae/mps.hpp"
#include "qvae/rng.hpp"
#include "qvae/tfi.hpp"

namespace qvae {

enum class DmrgInit { random, polarized };

struct DmrgOptions {
  std::size_t bond_dim = 25;
  std::size_t sweeps = 5;
  std::uint64_t seed = 0;
  double cutoff = 1e-12;
  double lanczos_tol = 1e-11;
  /// Starting state: random MPS, or the all-|0> product state (bond 1, grown
  /// by the two-site updates).
  DmrgInit init = DmrgInit::random;
  /// Stop early once a full sweep lowers the energy by less than this.
  std::optional<double> energy_tol;
};

struct DmrgResult {
  Mps state;
  double energy = 0.0;
  std::vector<double> sweep_energies;
  std::uint64_t seed = 0;
  std::size_t sweeps_done = 0;
};

namespace detail {

// L(b, w', b') from L(a, w, a'), bra A(a, s, b), W(w, s, t, w'), ket A(a', t, b').
inline RealTensor grow_left(const RealTensor& env, const RealTensor& a, const RealTensor& w) {
  RealTensor t1 = contract(env, a, {{0, 0}});        // (w, a', s, b)
  RealTensor t2 = contract(t1, w, {{0, 0}, {2, 1}});  // (a', b, t, w')
  return contract(t2, a, {{0, 0}, {2, 1}});           // (b, w', b')
}

// R(a, w, a') from R(b, w', b').
inline RealTensor grow_right(const RealTensor& env, const RealTensor& a, const RealTensor& w) {
  RealTensor t1 = contract(a, env, {{2, 0}});         // (a, s, w', b')
  RealTensor t2 = contract(t1, w, {{1, 1}, {2, 3}});  // (a, b', w, t)
  return contract(t2, a, {{1, 2}, {3, 1}});           // (a, w, a')
}

// Effective two-site Hamiltonian acting on theta(a', t1, t2, b').
inline RealTensor apply_two_site(const RealTensor& left, const RealTensor& w1, const RealTensor& w2,
                                 const RealTensor& right, const RealTensor& theta) {
  RealTensor x1 = contract(left, theta, {{2, 0}});      // (a, w, t1, t2, b')
  RealTensor x2 = contract(x1, w1, {{1, 0}, {2, 2}});   // (a, t2, b', s1, w')
  RealTensor x3 = contract(x2, w2, {{1, 2}, {4, 0}});   // (a, b', s1, s2, w'')
  RealTensor x4 = contract(x3, right, {{1, 2}, {4, 1}});  // (a, s1, s2, b)
  return x4;
}

}  // namespace detail

/// Two-site DMRG ground-state search. Each sweep runs left-to-right and then
/// right-to-left; the returned state is normalized with its canonical center
/// at site 0.
inline DmrgResult dmrg_ground_state(const Mpo& h, const DmrgOptions& opt) {
  if (opt.bond_dim < 1) throw ValidationError("bond_dim must be >= 1");
  if (opt.sweeps < 1) throw ValidationError("sweeps must be >= 1");
  const std::size_t n = h.size();
  if (n < 2) throw ValidationError("DMRG needs at least two sites");

  Rng rng(opt.seed);
  DmrgResult res;
  res.seed = opt.seed;
  const std::size_t d = h.sites[0].shape()[1];
  if (opt.init == DmrgInit::random) {
    res.state = random_mps(n, d, opt.bond_dim, rng);
  } else {
    std::vector<double> up(d, 0.0);
    up[0] = 1.0;
    res.state = product_mps(std::vector<std::vector<double>>(n, up));
    move_center(res.state, 0);
  }
  Mps& psi = res.state;

  std::vector<RealTensor> left(n + 1), right(n + 1);
  left[0] = RealTensor({1, 1, 1}, std::vector<double>{1.0});
  right[n] = RealTensor({1, 1, 1}, std::vector<double>{1.0});
  for (std::size_t i = n - 1; i >= 1; --i) right[i] = detail::grow_right(right[i + 1], psi.sites[i], h.sites[i]);

  std::uint64_t step = 0;
  auto optimize = [&](std::size_t i, bool moving_right, std::size_t sweep) {
    RealTensor theta = contract(psi.sites[i], psi.sites[i + 1], {{2, 0}});  // (a, s1, s2, b)
    const Shape sh = theta.shape();
    const RealTensor& w1 = h.sites[i];
    const RealTensor& w2 = h.sites[i + 1];
    const RealTensor& l = left[i];
    const RealTensor& r = right[i + 2];
    LinearMap apply = [&](std::span<const double> x, std::span<double> y) {
      RealTensor t(sh, std::vector<double>(x.begin(), x.end()));
      RealTensor out = detail::apply_two_site(l, w1, w2, r, t);
      std::copy(out.data().begin(), out.data().end(), y.begin());
    };
    LanczosOptions lo;
    lo.tol = opt.lanczos_tol;
    lo.seed = derive_seed(opt.seed, ++step);
    lo.max_iter = 20000;
    EigenPair e;
    try {
      e = lanczos_lowest(apply, theta.size(), lo, theta.data());
    } catch (const NumericalError& err) {
      throw NumericalError(std::string(err.what()) + " (sweep " + std::to_string(sweep) + ", sites " +
                           std::to_string(i) + "-" + std::to_string(i + 1) + ")");
    }
    const std::size_t a = sh[0], s1 = sh[1], s2 = sh[2], b = sh[3];
    SvdResult svd = svd_truncated(RealTensor({a * s1, s2 * b}, std::move(e.vector)), opt.bond_dim, opt.cutoff);
    const std::size_t k = svd.rank();
    double norm2 = 0;
    for (double s : svd.s) norm2 += s * s;
    const double inv = 1.0 / std::sqrt(norm2);
    if (moving_right) {
      psi.sites[i] = svd.u.reshaped({a, s1, k});
      RealTensor sv = svd.vt;
      for (std::size_t q = 0; q < k; ++q)
        for (std::size_t c = 0; c < s2 * b; ++c) sv[q * s2 * b + c] *= svd.s[q] * inv;
      psi.sites[i + 1] = sv.reshaped({k, s2, b});
      left[i + 1] = detail::grow_left(left[i], psi.sites[i], w1);
      psi.center = i + 1;
    } else {
      psi.sites[i + 1] = svd.vt.reshaped({k, s2, b});
      RealTensor us = svd.u;
      for (std::size_t row = 0; row < a * s1; ++row)
        for (std::size_t q = 0; q < k; ++q) us[row * k + q] *= svd.s[q] * inv;
      psi.sites[i] = us.reshaped({a, s1, k});
      right[i + 1] = detail::grow_right(right[i + 2], psi.sites[i + 1], w2);
      psi.center = i;
    }
    return e.value;
  };

  double energy = 0;
  for (std::size_t sweep = 0; sweep < opt.sweeps; ++sweep) {
    for (std::size_t i = 0; i + 1 < n; ++i) energy = optimize(i, true, sweep);
    for (std::size_t i = n - 1; i-- > 0;) energy = optimize(i, false, sweep);
    res.sweep_energies.push_back(energy);
    res.sweeps_done = sweep + 1;
    if (opt.energy_tol && sweep > 0 &&
        res.sweep_energies[sweep - 1] - res.sweep_energies[sweep] < *opt.energy_tol)
      break;
  }
  normalize(psi);
  res.energy = mpo_expectation(psi, h);
  return res;
}

}  // namespace qvae
