#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qvae/error.hpp"

namespace qvae {

using Shape = std::vector<std::size_t>;
using Complex = std::complex<double>;

template <class T>
struct is_complex : std::false_type {};
template <class T>
struct is_complex<std::complex<T>> : std::true_type {};

inline std::size_t shape_product(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

/// Dense row-major tensor of 64-bit real or complex scalars.
///
/// Invariant: product(shape) == data.size(). A rank-0 tensor holds one
/// scalar.
template <class T>
class DenseTensor {
 public:
  using value_type = T;

  DenseTensor() : shape_{}, data_(1, T{}) {}

  explicit DenseTensor(Shape shape, T fill = T{})
      : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

  DenseTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != data_.size())
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
  }

  static DenseTensor identity(std::size_t n) {
    DenseTensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = T{1};
    return t;
  }

  static DenseTensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<T> values) {
    return DenseTensor({rows, cols}, std::vector<T>(values));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t extent(std::size_t axis) const {
    if (axis >= shape_.size()) throw IndexError("axis " + std::to_string(axis) + " out of range");
    return shape_[axis];
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t flat) { return data_[flat]; }
  const T& operator[](std::size_t flat) const { return data_[flat]; }

  template <class... I>
  T& operator()(I... idx) {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <class... I>
  const T& operator()(I... idx) const {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }

  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) off = off * shape_[axis++] + i;
    return off;
  }

  /// Reinterpret the flat data under a new shape with the same element count.
  DenseTensor reshaped(Shape s) const {
    if (shape_product(s) != data_.size())
      throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(s));
    return DenseTensor(std::move(s), data_);
  }

  void reshape(Shape s) {
    if (shape_product(s) != data_.size())
      throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(s));
    shape_ = std::move(s);
  }

  /// Axis permutation: result axis k is input axis perm[k].
  DenseTensor permuted(std::span<const std::size_t> perm) const {
    const std::size_t r = rank();
    if (perm.size() != r) throw DimensionError("permutation length does not match rank");
    std::vector<bool> seen(r, false);
    Shape out_shape(r);
    for (std::size_t k = 0; k < r; ++k) {
      if (perm[k] >= r || seen[perm[k]]) throw DimensionError("invalid permutation");
      seen[perm[k]] = true;
      out_shape[k] = shape_[perm[k]];
    }
    bool trivial = true;
    for (std::size_t k = 0; k < r; ++k) trivial = trivial && perm[k] == k;
    if (trivial) return *this;

    std::vector<std::size_t> in_stride(r, 1);
    for (std::size_t k = r; k-- > 1;) in_stride[k - 1] = in_stride[k] * shape_[k];
    std::vector<std::size_t> stride(r);
    for (std::size_t k = 0; k < r; ++k) stride[k] = in_stride[perm[k]];

    DenseTensor out(out_shape);
    if (out.size() == 0) return out;
    std::vector<std::size_t> idx(r, 0);
    std::size_t src = 0;
    const std::size_t inner = r ? out_shape[r - 1] : 1;
    const std::size_t inner_stride = r ? stride[r - 1] : 0;
    for (std::size_t dst = 0; dst < out.size(); dst += inner) {
      for (std::size_t i = 0; i < inner; ++i) out.data_[dst + i] = data_[src + i * inner_stride];
      // advance the multi-index over all but the innermost axis
      for (std::size_t k = r - 1; k-- > 0;) {
        ++idx[k];
        src += stride[k];
        if (idx[k] < out_shape[k]) break;
        src -= stride[k] * out_shape[k];
        idx[k] = 0;
      }
    }
    return out;
  }

  DenseTensor permuted(std::initializer_list<std::size_t> perm) const {
    std::vector<std::size_t> p(perm);
    return permuted(std::span<const std::size_t>(p));
  }

  DenseTensor conj() const {
    if constexpr (is_complex<T>::value) {
      DenseTensor out(*this);
      for (auto& v : out.data_) v = std::conj(v);
      return out;
    } else {
      return *this;
    }
  }

  double norm() const {
    double s = 0;
    for (const auto& v : data_) s += std::norm(v);
    return std::sqrt(s);
  }

  DenseTensor& operator*=(T a) {
    for (auto& v : data_) v *= a;
    return *this;
  }
  DenseTensor& operator+=(const DenseTensor& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  DenseTensor& operator-=(const DenseTensor& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  friend DenseTensor operator*(T a, DenseTensor t) { return t *= a; }
  friend DenseTensor operator+(DenseTensor a, const DenseTensor& b) { return a += b; }
  friend DenseTensor operator-(DenseTensor a, const DenseTensor& b) { return a -= b; }

  bool operator==(const DenseTensor& o) const = default;

 private:
  void check_same(const DenseTensor& o) const {
    if (o.shape_ != shape_)
      throw DimensionError("shape mismatch " + shape_string(shape_) + " vs " + shape_string(o.shape_));
  }

  Shape shape_;
  std::vector<T> data_;
};

using RealTensor = DenseTensor<double>;
using ComplexTensor = DenseTensor<Complex>;

inline ComplexTensor to_complex(const RealTensor& t) {
  std::vector<Complex> d(t.data().begin(), t.data().end());
  return ComplexTensor(t.shape(), std::move(d));
}

/// Largest elementwise absolute difference; shapes must agree.
template <class T>
double max_abs_diff(const DenseTensor<T>& a, const DenseTensor<T>& b) {
  if (a.shape() != b.shape())
    throw DimensionError("shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <class T>
using RowMajorMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
Eigen::Map<const RowMajorMatrix<T>> as_matrix(const DenseTensor<T>& t, std::size_t rows, std::size_t cols) {
  return {t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}
template <class T>
Eigen::Map<RowMajorMatrix<T>> as_matrix(DenseTensor<T>& t, std::size_t rows, std::size_t cols) {
  return {t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

using AxisPairs = std::vector<std::pair<std::size_t, std::size_t>>;

/// Sum over paired axes (a_axis, b_axis). The result carries the free axes
/// of `a` in order followed by the free axes of `b`.
template <class T>
DenseTensor<T> contract(const DenseTensor<T>& a, const DenseTensor<T>& b, const AxisPairs& axes) {
  std::vector<bool> a_used(a.rank(), false), b_used(b.rank(), false);
  std::vector<std::size_t> a_perm, b_perm;
  std::size_t inner = 1;
  for (auto [ia, ib] : axes) {
    if (ia >= a.rank() || ib >= b.rank()) throw IndexError("contraction axis out of range");
    if (a_used[ia] || b_used[ib]) throw DimensionError("contraction axis repeated");
    if (a.shape()[ia] != b.shape()[ib])
      throw DimensionError("contracted extents differ: " + std::to_string(a.shape()[ia]) + " vs " +
                           std::to_string(b.shape()[ib]));
    a_used[ia] = b_used[ib] = true;
    inner *= a.shape()[ia];
  }
  Shape out_shape;
  std::size_t rows = 1, cols = 1;
  for (std::size_t k = 0; k < a.rank(); ++k)
    if (!a_used[k]) {
      a_perm.push_back(k);
      out_shape.push_back(a.shape()[k]);
      rows *= a.shape()[k];
    }
  for (auto [ia, ib] : axes) {
    a_perm.push_back(ia);
    b_perm.push_back(ib);
  }
  for (std::size_t k = 0; k < b.rank(); ++k)
    if (!b_used[k]) {
      b_perm.push_back(k);
      out_shape.push_back(b.shape()[k]);
      cols *= b.shape()[k];
    }
  const DenseTensor<T> ap = a.permuted(a_perm);
  const DenseTensor<T> bp = b.permuted(b_perm);
  DenseTensor<T> out(out_shape);
  if (rows && cols) {
    if (inner == 0) return out;
    as_matrix(out, rows, cols).noalias() = as_matrix(ap, rows, inner) * as_matrix(bp, inner, cols);
  }
  return out;
}

/// Rank-2 product.
template <class T>
DenseTensor<T> matmul(const DenseTensor<T>& a, const DenseTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul expects matrices");
  return contract(a, b, {{1, 0}});
}

template <class T>
DenseTensor<T> transpose(const DenseTensor<T>& m) {
  if (m.rank() != 2) throw DimensionError("transpose expects a matrix");
  return m.permuted({1, 0});
}

}  // namespace qvae
