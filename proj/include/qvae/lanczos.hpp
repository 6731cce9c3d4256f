#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qvae/error.hpp"
#include "qvae/linalg.hpp"
#include "qvae/rng.hpp"

namespace qvae {

/// y = A x for a symmetric operator A.
using LinearMap = std::function<void(std::span<const double> x, std::span<double> y)>;

struct EigenPair {
  double value = 0.0;
  std::vector<double> vector;
  double residual = 0.0;
  std::size_t matvecs = 0;
};

struct LanczosOptions {
  double tol = 1e-10;
  std::size_t max_iter = 5000;  // budget of operator applications
  std::size_t krylov_dim = 48;
  std::uint64_t seed = 0x1a2c05;
};

namespace detail {

inline double vdot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double vnorm(std::span<const double> a) { return std::sqrt(vdot(a, a)); }

inline void random_unit(Rng& rng, std::vector<double>& v) {
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  const double n = vnorm(v);
  for (auto& x : v) x /= n;
}

// Removes the components of v along the orthonormal basis (two passes).
inline void orthogonalize(std::vector<double>& v, const std::vector<std::vector<double>>& basis,
                          std::vector<double>* coeff = nullptr) {
  for (int pass = 0; pass < 2; ++pass)
    for (std::size_t k = 0; k < basis.size(); ++k) {
      const double c = vdot(basis[k], v);
      if (coeff) (*coeff)[k] += c;
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * basis[k][i];
    }
}

}  // namespace detail

/// Lowest eigenpair of a symmetric operator by restarted Lanczos with full
/// reorthogonalization. Converged when |A v - lambda v| <= tol * |lambda|.
///
/// A vanishing Krylov vector (invariant subspace) is replaced by a fresh
/// random direction orthogonal to the basis, so an initial guess that is an
/// excited eigenvector cannot trap the iteration.
inline EigenPair lanczos_lowest(const LinearMap& apply, std::size_t dim, const LanczosOptions& opt = {},
                                std::span<const double> guess = {}) {
  if (dim < 1) throw ValidationError("lanczos dimension must be >= 1");
  Rng rng(opt.seed);
  std::vector<double> start(dim);
  if (guess.size() == dim && detail::vnorm(guess) > 0) {
    start.assign(guess.begin(), guess.end());
    const double n = detail::vnorm(start);
    for (auto& x : start) x /= n;
  } else {
    detail::random_unit(rng, start);
  }

  EigenPair best;
  std::vector<double> w(dim), ritz(dim), ax(dim);
  const std::size_t kmax = std::min(opt.krylov_dim, dim);
  while (true) {
    std::vector<std::vector<double>> basis;
    std::vector<std::vector<double>> images;  // A * basis[k]
    basis.reserve(kmax);
    images.reserve(kmax);
    basis.push_back(start);
    std::vector<double> alpha, beta;
    double op_scale = 0.0;
    while (true) {
      const std::size_t j = basis.size() - 1;
      apply(basis[j], w);
      ++best.matvecs;
      images.push_back(w);
      std::vector<double> coeff(basis.size(), 0.0);
      detail::orthogonalize(w, basis, &coeff);
      alpha.push_back(coeff[j]);
      if (basis.size() == kmax) break;
      const double b = detail::vnorm(w);
      op_scale = std::max({op_scale, std::abs(alpha.back()), b});
      if (b <= 1e-13 * op_scale) {
        // Invariant subspace: continue with a fresh random direction.
        std::vector<double> fresh(dim);
        double n = 0;
        for (int attempt = 0; attempt < 8 && n < 1e-6; ++attempt) {
          detail::random_unit(rng, fresh);
          detail::orthogonalize(fresh, basis);
          n = detail::vnorm(fresh);
        }
        if (n < 1e-6) break;
        for (auto& x : fresh) x /= n;
        beta.push_back(0.0);
        basis.push_back(std::move(fresh));
      } else {
        beta.push_back(b);
        for (auto& x : w) x /= b;
        basis.push_back(w);
      }
      if (best.matvecs >= opt.max_iter) break;
    }
    const std::size_t m = basis.size();
    // Projected operator; computed from stored images so it stays exact even
    // when reorthogonalization perturbs the tridiagonal structure.
    RealTensor t({m, m});
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t c = a; c < m; ++c) {
        const double v = 0.5 * (detail::vdot(basis[a], images[c]) + detail::vdot(basis[c], images[a]));
        t[a * m + c] = t[c * m + a] = v;
      }
    const SymmetricEigen eig = symmetric_eigen(t);
    const double theta = eig.values[0];
    std::fill(ritz.begin(), ritz.end(), 0.0);
    std::fill(ax.begin(), ax.end(), 0.0);
    for (std::size_t k = 0; k < m; ++k) {
      const double y = eig.vectors[k * m + 0];
      for (std::size_t i = 0; i < dim; ++i) {
        ritz[i] += y * basis[k][i];
        ax[i] += y * images[k][i];
      }
    }
    const double rn = detail::vnorm(ritz);
    double res = 0;
    for (std::size_t i = 0; i < dim; ++i) {
      ritz[i] /= rn;
      ax[i] /= rn;
      const double r = ax[i] - theta * ritz[i];
      res += r * r;
    }
    res = std::sqrt(res);
    best.value = theta;
    best.vector = ritz;
    best.residual = res;
    if (res <= opt.tol * std::abs(theta) || (m == dim && res <= 1e-12 * std::max(1.0, std::abs(theta)))) return best;
    if (best.matvecs >= opt.max_iter)
      throw NumericalError("lanczos budget of " + std::to_string(opt.max_iter) +
                           " applications exhausted; residual " + std::to_string(res));
    start = ritz;
  }
}

}  // namespace qvae
