#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qvae/binio.hpp"
#include "qvae/error.hpp"
#include "qvae/linalg.hpp"
#include "qvae/rng.hpp"
#include "qvae/tensor.hpp"

namespace qvae {

/// Open-boundary matrix product state with real site tensors of shape
/// (left bond, physical, right bond). Boundary bonds have extent 1.
///
/// When `center` is set, sites left of it are left isometries and sites right
/// of it are right isometries.
struct Mps {
  std::vector<RealTensor> sites;
  std::optional<std::size_t> center;

  std::size_t size() const noexcept { return sites.size(); }
  std::size_t phys(std::size_t i) const { return sites[i].shape()[1]; }
  std::size_t left_bond(std::size_t i) const { return sites[i].shape()[0]; }
  std::size_t right_bond(std::size_t i) const { return sites[i].shape()[2]; }
  std::size_t max_bond() const {
    std::size_t m = 1;
    for (const auto& s : sites) m = std::max(m, s.shape()[2]);
    return m;
  }

  void validate() const {
    if (sites.empty()) throw DimensionError("MPS has no sites");
    for (std::size_t i = 0; i < sites.size(); ++i) {
      if (sites[i].rank() != 3) throw DimensionError("MPS site " + std::to_string(i) + " is not rank 3");
      if (i + 1 < sites.size() && sites[i].shape()[2] != sites[i + 1].shape()[0])
        throw DimensionError("MPS bond mismatch between sites " + std::to_string(i) + " and " + std::to_string(i + 1));
    }
    if (sites.front().shape()[0] != 1 || sites.back().shape()[2] != 1)
      throw DimensionError("MPS boundary bonds must have extent 1");
  }
};

/// Random MPS with bond extents min(bond_dim, d^k, d^(N-k)), normalized and
/// right-canonical (center at site 0).
Mps random_mps(std::size_t n_sites, std::size_t phys, std::size_t bond_dim, Rng& rng);

/// Product state from per-site local amplitude vectors.
inline Mps product_mps(const std::vector<std::vector<double>>& local) {
  Mps m;
  for (const auto& v : local) m.sites.emplace_back(Shape{1, v.size(), 1}, v);
  m.validate();
  return m;
}

/// <a|b> for two MPS over the same physical extents.
inline double overlap(const Mps& a, const Mps& b) {
  if (a.size() != b.size()) throw DimensionError("overlap of MPS with different lengths");
  RealTensor env({1, 1}, std::vector<double>{1.0});  // (bra bond, ket bond)
  for (std::size_t i = 0; i < a.size(); ++i) {
    // env(a, b) A(a, s, a') B(b, s, b') -> (a', b')
    RealTensor t = contract(env, b.sites[i], {{1, 0}});      // (a, s, b')
    env = contract(a.sites[i], t, {{0, 0}, {1, 1}});         // (a', b')
  }
  return env[0];
}

inline double norm(const Mps& m) { return std::sqrt(std::max(0.0, overlap(m, m))); }

namespace detail {

inline void left_orthonormalize(Mps& m, std::size_t i) {
  RealTensor& a = m.sites[i];
  const std::size_t l = a.shape()[0], d = a.shape()[1], r = a.shape()[2];
  QrResult qr = qr_thin(a.reshaped({l * d, r}));
  const std::size_t k = qr.q.shape()[1];
  a = qr.q.reshaped({l, d, k});
  m.sites[i + 1] = contract(qr.r, m.sites[i + 1], {{1, 0}});
}

inline void right_orthonormalize(Mps& m, std::size_t i) {
  RealTensor& a = m.sites[i];
  const std::size_t l = a.shape()[0], d = a.shape()[1], r = a.shape()[2];
  QrResult qr = qr_thin(transpose(a.reshaped({l, d * r})));  // (d r) x k, k x l
  const std::size_t k = qr.q.shape()[1];
  a = transpose(qr.q).reshaped({k, d, r});
  // A_{i-1}(a, s, l) R^T(l, k)
  m.sites[i - 1] = contract(m.sites[i - 1], qr.r, {{2, 1}});
}

}  // namespace detail

/// Brings the MPS into mixed-canonical form with center c.
inline void move_center(Mps& m, std::size_t c) {
  if (c >= m.size()) throw IndexError("canonical center " + std::to_string(c) + " out of range");
  if (!m.center) {
    for (std::size_t i = 0; i < c; ++i) detail::left_orthonormalize(m, i);
    for (std::size_t i = m.size() - 1; i > c; --i) detail::right_orthonormalize(m, i);
  } else if (*m.center < c) {
    for (std::size_t i = *m.center; i < c; ++i) detail::left_orthonormalize(m, i);
  } else {
    for (std::size_t i = *m.center; i > c; --i) detail::right_orthonormalize(m, i);
  }
  m.center = c;
}

/// Scales the MPS to unit norm; returns the previous norm.
inline double normalize(Mps& m) {
  if (!m.center) move_center(m, 0);
  RealTensor& a = m.sites[*m.center];
  const double nrm = a.norm();
  if (!(nrm > 0)) throw NumericalError("cannot normalize an MPS with zero norm");
  a *= 1.0 / nrm;
  return nrm;
}

inline Mps random_mps(std::size_t n_sites, std::size_t phys, std::size_t bond_dim, Rng& rng) {
  if (n_sites < 1 || phys < 1 || bond_dim < 1) throw ValidationError("random_mps needs positive sizes");
  std::vector<std::size_t> bonds(n_sites + 1, 1);
  for (std::size_t k = 1; k < n_sites; ++k) {
    double left = std::pow(static_cast<double>(phys), static_cast<double>(k));
    double right = std::pow(static_cast<double>(phys), static_cast<double>(n_sites - k));
    bonds[k] = static_cast<std::size_t>(std::min({static_cast<double>(bond_dim), left, right}));
  }
  Mps m;
  for (std::size_t i = 0; i < n_sites; ++i) {
    RealTensor t({bonds[i], phys, bonds[i + 1]});
    for (auto& x : t.data()) x = rng.uniform(-1.0, 1.0);
    m.sites.push_back(std::move(t));
  }
  move_center(m, 0);
  normalize(m);
  return m;
}

/// Full contraction into a d^N amplitude vector (site 0 most significant).
inline RealTensor to_state_vector(const Mps& m) {
  m.validate();
  std::size_t dim = 1;
  for (std::size_t i = 0; i < m.size(); ++i) {
    dim *= m.phys(i);
    if (dim > (std::size_t{1} << 24)) throw CapacityError("state vector too large to materialize");
  }
  RealTensor acc = m.sites[0].reshaped({m.phys(0), m.right_bond(0)});
  for (std::size_t i = 1; i < m.size(); ++i) {
    RealTensor next = contract(acc, m.sites[i], {{1, 0}});  // (D, s, r)
    acc = next.reshaped({next.shape()[0] * next.shape()[1], next.shape()[2]});
  }
  return acc.reshaped({dim});
}

/// MPS checkpoint: "MPS1", u32 N, then per site u32 left, u32 phys,
/// u32 right and the row-major float64 payload. Little-endian.
inline std::vector<std::uint8_t> serialize_mps(const Mps& m) {
  m.validate();
  binio::Writer w;
  w.magic("MPS1");
  w.u32(static_cast<std::uint32_t>(m.size()));
  for (const auto& s : m.sites) {
    w.u32(static_cast<std::uint32_t>(s.shape()[0]));
    w.u32(static_cast<std::uint32_t>(s.shape()[1]));
    w.u32(static_cast<std::uint32_t>(s.shape()[2]));
    w.f64s(s.data().data(), s.size());
  }
  return std::move(w.buffer());
}

inline Mps deserialize_mps(std::vector<std::uint8_t> bytes, const std::string& what = "MPS checkpoint") {
  binio::Reader r(std::move(bytes), what);
  r.expect_magic("MPS1");
  const std::uint32_t n = r.u32();
  if (n == 0 || n > 4096) r.fail("implausible site count " + std::to_string(n));
  Mps m;
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::size_t l = r.u32(), d = r.u32(), rr = r.u32();
    if (l == 0 || d == 0 || rr == 0 || l * d * rr > (std::size_t{1} << 28)) r.fail("implausible site extents");
    RealTensor t({l, d, rr});
    r.f64s(t.data().data(), t.size());
    m.sites.push_back(std::move(t));
  }
  r.expect_end();
  try {
    m.validate();
  } catch (const DimensionError& e) {
    r.fail(e.what());
  }
  return m;
}

inline void save_mps(const Mps& m, const std::string& path) { binio::write_file(path, serialize_mps(m)); }
inline Mps load_mps(const std::string& path) { return deserialize_mps(binio::read_file(path), path); }

}  // namespace qvae
