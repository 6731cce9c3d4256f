#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "qvae/error.hpp"
#include "qvae/tensor.hpp"

namespace qvae {

/// Truncated singular value decomposition m ~ u * diag(s) * vt.
/// u is rows x k with orthonormal columns, vt is k x cols with orthonormal
/// rows, s is non-negative and descending.
struct SvdResult {
  RealTensor u;
  std::vector<double> s;
  RealTensor vt;

  std::size_t rank() const noexcept { return s.size(); }
  /// Squared Frobenius norm of the input that was not retained.
  double discarded_weight = 0.0;
};

namespace detail {

// Column-major working matrix for the Jacobi sweeps.
struct ColMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> a;
  double* col(std::size_t j) { return a.data() + j * rows; }
  const double* col(std::size_t j) const { return a.data() + j * rows; }
};

inline double dot(const double* x, const double* y, std::size_t n) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

// Makes the columns of `q` orthonormal in place (two passes of modified
// Gram-Schmidt). Columns that collapse are replaced by a unit vector from the
// standard basis, orthogonalized against earlier columns.
inline void orthonormalize_columns(ColMatrix& q) {
  auto project_out = [&](double* cj, std::size_t j) {
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t k = 0; k < j; ++k) {
        const double* ck = q.col(k);
        const double c = dot(ck, cj, q.rows);
        for (std::size_t i = 0; i < q.rows; ++i) cj[i] -= c * ck[i];
      }
  };
  std::size_t next_basis = 0;
  for (std::size_t j = 0; j < q.cols; ++j) {
    double* cj = q.col(j);
    const double start = std::sqrt(dot(cj, cj, q.rows));
    project_out(cj, j);
    double nrm = std::sqrt(dot(cj, cj, q.rows));
    if (start == 0.0 || nrm <= 1e-8 * start) {
      nrm = 0.0;
      while (nrm <= 0.5) {
        if (next_basis >= q.rows) throw NumericalError("cannot complete orthonormal basis");
        std::fill(cj, cj + q.rows, 0.0);
        cj[next_basis++] = 1.0;
        project_out(cj, j);
        nrm = std::sqrt(dot(cj, cj, q.rows));
      }
    }
    for (std::size_t i = 0; i < q.rows; ++i) cj[i] /= nrm;
  }
}

// Full one-sided (Hestenes) Jacobi SVD of a tall matrix held column-major.
// On exit `w` holds U*diag(s) column-wise and `v` the right singular vectors.
inline void jacobi_svd_tall(ColMatrix& w, ColMatrix& v, std::size_t max_sweeps) {
  const std::size_t n = w.cols, m = w.rows;
  v.rows = v.cols = n;
  v.a.assign(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) v.a[j * n + j] = 1.0;
  const double tol = std::numeric_limits<double>::epsilon() * static_cast<double>(std::max<std::size_t>(m, 1));
  double worst = 0;
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    worst = 0;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        double* ap = w.col(p);
        double* aq = w.col(q);
        const double alpha = dot(ap, ap, m);
        const double beta = dot(aq, aq, m);
        const double gamma = dot(ap, aq, m);
        if (alpha == 0.0 || beta == 0.0) continue;
        const double ratio = std::abs(gamma) / std::sqrt(alpha * beta);
        worst = std::max(worst, ratio);
        if (ratio <= tol) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = ap[i], y = aq[i];
          ap[i] = c * x - s * y;
          aq[i] = s * x + c * y;
        }
        double* vp = v.col(p);
        double* vq = v.col(q);
        for (std::size_t i = 0; i < n; ++i) {
          const double x = vp[i], y = vq[i];
          vp[i] = c * x - s * y;
          vq[i] = s * x + c * y;
        }
      }
    if (!rotated) return;
  }
  throw NumericalError("Jacobi SVD did not converge; residual off-diagonal ratio " + std::to_string(worst));
}

}  // namespace detail

/// Truncated SVD of a matrix by one-sided Jacobi rotations.
///
/// Keeps min(max_rank, #{s_i > cutoff * s_0}) triplets (at least one).
inline SvdResult svd_truncated(const RealTensor& m, std::size_t max_rank, double cutoff,
                               std::size_t max_sweeps = 80) {
  if (m.rank() != 2) throw DimensionError("svd expects a matrix, got shape " + shape_string(m.shape()));
  if (max_rank < 1) throw ValidationError("svd max_rank must be >= 1");
  if (!(cutoff >= 0)) throw ValidationError("svd cutoff must be >= 0");
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  if (rows == 0 || cols == 0) throw DimensionError("svd of an empty matrix");

  // Work on the tall orientation; transpose back at the end.
  const bool tall = rows >= cols;
  const std::size_t mr = tall ? rows : cols, mc = tall ? cols : rows;
  detail::ColMatrix w{mr, mc, std::vector<double>(mr * mc)};
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      if (tall)
        w.a[j * mr + i] = m[i * cols + j];
      else
        w.a[i * mr + j] = m[i * cols + j];
    }
  detail::ColMatrix v;
  detail::jacobi_svd_tall(w, v, max_sweeps);

  std::vector<double> sv(mc);
  for (std::size_t j = 0; j < mc; ++j) sv[j] = std::sqrt(detail::dot(w.col(j), w.col(j), mr));
  std::vector<std::size_t> order(mc);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sv[a] > sv[b]; });

  const double s0 = sv[order[0]];
  std::size_t keep = 0;
  for (std::size_t j : order)
    if (sv[j] > cutoff * s0) ++keep;
  keep = std::clamp<std::size_t>(keep, 1, std::min(max_rank, mc));

  SvdResult res;
  double total = 0;
  for (double x : sv) total += x * x;
  // Left factor of the tall problem: normalized columns of w.
  detail::ColMatrix left{mr, keep, std::vector<double>(mr * keep)};
  detail::ColMatrix right{mc, keep, std::vector<double>(mc * keep)};
  res.s.resize(keep);
  double kept = 0;
  for (std::size_t k = 0; k < keep; ++k) {
    const std::size_t j = order[k];
    res.s[k] = sv[j];
    kept += sv[j] * sv[j];
    const double inv = sv[j] > 0 ? 1.0 / sv[j] : 0.0;
    for (std::size_t i = 0; i < mr; ++i) left.a[k * mr + i] = w.col(j)[i] * inv;
    std::copy(v.col(j), v.col(j) + mc, right.a.begin() + static_cast<std::ptrdiff_t>(k * mc));
  }
  res.discarded_weight = std::max(0.0, total - kept);
  detail::orthonormalize_columns(left);

  const detail::ColMatrix& uu = tall ? left : right;
  const detail::ColMatrix& vv = tall ? right : left;
  res.u = RealTensor({rows, keep});
  res.vt = RealTensor({keep, cols});
  for (std::size_t k = 0; k < keep; ++k) {
    for (std::size_t i = 0; i < rows; ++i) res.u[i * keep + k] = uu.a[k * rows + i];
    for (std::size_t j = 0; j < cols; ++j) res.vt[k * cols + j] = vv.a[k * cols + j];
  }
  return res;
}

/// Thin QR by Householder reflections: m (r x c) = q (r x k) * rr (k x c)
/// with k = min(r, c).
struct QrResult {
  RealTensor q;
  RealTensor r;
};

inline QrResult qr_thin(const RealTensor& m) {
  if (m.rank() != 2) throw DimensionError("qr expects a matrix");
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  const std::size_t k = std::min(rows, cols);
  RowMajorMatrix<double> a = as_matrix(m, rows, cols);
  std::vector<Eigen::VectorXd> reflectors;
  reflectors.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    Eigen::VectorXd x = a.block(j, j, rows - j, 1);
    const double alpha = x.norm();
    Eigen::VectorXd vjj = x;
    if (alpha == 0.0) {
      reflectors.emplace_back(Eigen::VectorXd::Zero(rows - j));
      continue;
    }
    vjj(0) += (x(0) >= 0 ? alpha : -alpha);
    vjj.normalize();
    a.block(j, j, rows - j, cols - j) -= 2.0 * vjj * (vjj.transpose() * a.block(j, j, rows - j, cols - j));
    reflectors.push_back(std::move(vjj));
  }
  RowMajorMatrix<double> q = RowMajorMatrix<double>::Identity(rows, k);
  for (std::size_t j = k; j-- > 0;) {
    const Eigen::VectorXd& vj = reflectors[j];
    if (vj.squaredNorm() == 0.0) continue;
    q.block(j, 0, rows - j, k) -= 2.0 * vj * (vj.transpose() * q.block(j, 0, rows - j, k));
  }
  // Fix signs so that diag(r) >= 0.
  RowMajorMatrix<double> r = a.topRows(k).triangularView<Eigen::Upper>();
  for (std::size_t j = 0; j < k; ++j)
    if (r(j, j) < 0) {
      r.row(j) *= -1.0;
      q.col(j) *= -1.0;
    }
  QrResult out{RealTensor({rows, k}), RealTensor({k, cols})};
  as_matrix(out.q, rows, k) = q;
  as_matrix(out.r, k, cols) = r;
  return out;
}

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi
/// rotations. Eigenvalues ascending; eigenvectors are the columns.
struct SymmetricEigen {
  std::vector<double> values;
  RealTensor vectors;
};

inline SymmetricEigen symmetric_eigen(const RealTensor& m, std::size_t max_sweeps = 100) {
  if (m.rank() != 2 || m.shape()[0] != m.shape()[1]) throw DimensionError("symmetric_eigen expects a square matrix");
  const std::size_t n = m.shape()[0];
  std::vector<double> a(m.data().begin(), m.data().end());
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  auto A = [&](std::size_t i, std::size_t j) -> double& { return a[i * n + j]; };
  double off = 0;
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    off = 0;
    double diag = 0;
    for (std::size_t i = 0; i < n; ++i) {
      diag += A(i, i) * A(i, i);
      for (std::size_t j = i + 1; j < n; ++j) off += A(i, j) * A(i, j);
    }
    if (off <= 1e-32 * std::max(diag, 1e-300)) break;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = A(p, q);
        if (apq == 0.0) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return A(x, x) < A(y, y); });
  SymmetricEigen out{std::vector<double>(n), RealTensor({n, n})};
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = A(order[k], order[k]);
    for (std::size_t i = 0; i < n; ++i) out.vectors[i * n + k] = v[i * n + order[k]];
  }
  return out;
}

/// Inverse of a small square matrix by Gauss-Jordan elimination with
/// partial pivoting.
inline RealTensor inverse(const RealTensor& m) {
  if (m.rank() != 2 || m.shape()[0] != m.shape()[1]) throw DimensionError("inverse expects a square matrix");
  const std::size_t n = m.shape()[0];
  std::vector<double> a(m.data().begin(), m.data().end());
  RealTensor inv = RealTensor::identity(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) piv = r;
    if (std::abs(a[piv * n + c]) < 1e-300) throw NumericalError("singular matrix in inverse");
    if (piv != c)
      for (std::size_t j = 0; j < n; ++j) {
        std::swap(a[c * n + j], a[piv * n + j]);
        std::swap(inv[c * n + j], inv[piv * n + j]);
      }
    const double d = a[c * n + c];
    for (std::size_t j = 0; j < n; ++j) {
      a[c * n + j] /= d;
      inv[c * n + j] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r * n + c];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        a[r * n + j] -= f * a[c * n + j];
        inv[r * n + j] -= f * inv[c * n + j];
      }
    }
  }
  return inv;
}

}  // namespace qvae
