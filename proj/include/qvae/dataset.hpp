#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "qvae/binio.hpp"
#include "qvae/dmrg.hpp"
#include "qvae/error.hpp"
#include "qvae/povm.hpp"
#include "qvae/sampler.hpp"

namespace qvae {

struct DatasetGroup {
  double field = 0.0;
  Samples samples;
  bool operator==(const DatasetGroup&) const = default;
};

/// Measurement records for a grid of transverse fields. `bond_dim` and
/// `sweeps` describe the generating run; only the seed is stored on disk.
struct Dataset {
  std::size_t n_sites = 0;
  std::vector<DatasetGroup> groups;
  std::uint64_t seed = 0;
  std::size_t bond_dim = 0;
  std::size_t sweeps = 0;

  std::size_t total_records() const {
    std::size_t t = 0;
    for (const auto& g : groups) t += g.samples.count();
    return t;
  }
};

inline std::string format_field(double h) {
  std::ostringstream os;
  os.precision(6);
  os << h;
  return os.str();
}

/// Per-field stream seeds, shared by the ground-state and sampling commands
/// so that a dataset can be regenerated from saved checkpoints.
inline std::uint64_t field_dmrg_seed(std::uint64_t master, std::size_t group) { return derive_seed(master, 2 * group); }
inline std::uint64_t field_sample_seed(std::uint64_t master, std::size_t group) {
  return derive_seed(master, 2 * group + 1);
}

/// Packs 2-bit symbols, outcome t = record * N + site at byte t/4, bit
/// offset 2*(t%4).
inline std::vector<std::uint8_t> pack_symbols(const std::vector<std::uint8_t>& sym) {
  std::vector<std::uint8_t> out((sym.size() + 3) / 4, 0);
  for (std::size_t t = 0; t < sym.size(); ++t) {
    if (sym[t] > 3) throw ValidationError("outcome symbol out of range");
    out[t / 4] |= static_cast<std::uint8_t>(sym[t] << (2 * (t % 4)));
  }
  return out;
}

inline std::vector<std::uint8_t> unpack_symbols(const std::uint8_t* p, std::size_t count) {
  std::vector<std::uint8_t> out(count);
  for (std::size_t t = 0; t < count; ++t) out[t] = (p[t / 4] >> (2 * (t % 4))) & 3;
  return out;
}

/// "QVD1", u32 version, u32 N, u32 groups; per group f64 h, u64 count and the
/// packed block; trailing u64 seed.
inline std::vector<std::uint8_t> serialize_dataset(const Dataset& d) {
  binio::Writer w;
  w.magic("QVD1");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(d.n_sites));
  w.u32(static_cast<std::uint32_t>(d.groups.size()));
  for (const auto& g : d.groups) {
    if (g.samples.n_sites != d.n_sites) throw DimensionError("dataset group has the wrong chain length");
    w.f64(g.field);
    w.u64(g.samples.count());
    const auto packed = pack_symbols(g.samples.symbols);
    w.bytes(packed.data(), packed.size());
  }
  w.u64(d.seed);
  return std::move(w.buffer());
}

inline Dataset deserialize_dataset(std::vector<std::uint8_t> bytes, const std::string& what = "dataset") {
  binio::Reader r(std::move(bytes), what);
  r.expect_magic("QVD1");
  const std::uint32_t version = r.u32();
  if (version != 1) r.fail("unsupported dataset version " + std::to_string(version));
  Dataset d;
  d.n_sites = r.u32();
  if (d.n_sites == 0 || d.n_sites > 4096) r.fail("implausible chain length " + std::to_string(d.n_sites));
  const std::uint32_t n_groups = r.u32();
  for (std::uint32_t g = 0; g < n_groups; ++g) {
    DatasetGroup grp;
    grp.field = r.f64();
    if (!std::isfinite(grp.field)) r.fail("non-finite field value");
    const std::uint64_t count = r.u64();
    if (count > r.remaining() * 4 / d.n_sites + 1) r.fail("record count " + std::to_string(count) + " exceeds file size");
    const std::size_t n_sym = count * d.n_sites;
    const std::uint8_t* block = r.view((n_sym + 3) / 4);
    grp.samples.n_sites = d.n_sites;
    grp.samples.symbols = unpack_symbols(block, n_sym);
    d.groups.push_back(std::move(grp));
  }
  d.seed = r.u64();
  r.expect_end();
  return d;
}

inline void save_dataset(const Dataset& d, const std::string& path) { binio::write_file(path, serialize_dataset(d)); }
inline Dataset load_dataset(const std::string& path) { return deserialize_dataset(binio::read_file(path), path); }

/// DMRG for one grid point with its derived seed.
inline DmrgResult solve_field(const TfiParams& base, double h, const DmrgOptions& dmrg, std::uint64_t master,
                              std::size_t group) {
  TfiParams p = base;
  p.field_x = h;
  DmrgOptions o = dmrg;
  o.seed = field_dmrg_seed(master, group);
  try {
    return dmrg_ground_state(tfi_mpo(p), o);
  } catch (const Error& e) {
    rethrow_with_context(e, "field h=" + format_field(h));
  }
}

/// Measurement records of one ground state.
inline Samples sample_field(const Mps& psi, double h, std::size_t count, std::uint64_t master, std::size_t group) {
  try {
    return sample_state_povm(psi, tetrahedral_frame(), count, field_sample_seed(master, group));
  } catch (const Error& e) {
    rethrow_with_context(e, "field h=" + format_field(h));
  }
}

/// Ground state and tetrahedral measurement records for every grid field,
/// in grid order. If `states` is given it receives the DMRG results.
inline Dataset generate_dataset(const TfiParams& base, const std::vector<double>& grid, const DmrgOptions& dmrg,
                                std::size_t samples_per_field, std::uint64_t seed,
                                std::vector<DmrgResult>* states = nullptr) {
  if (grid.empty()) throw ValidationError("field grid is empty");
  if (samples_per_field < 1) throw ValidationError("samples_per_field must be >= 1");
  Dataset d;
  d.n_sites = base.n_sites;
  d.seed = seed;
  d.bond_dim = dmrg.bond_dim;
  d.sweeps = dmrg.sweeps;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    DmrgResult res = solve_field(base, grid[g], dmrg, seed, g);
    d.groups.push_back({grid[g], sample_field(res.state, grid[g], samples_per_field, seed, g)});
    if (states) states->push_back(std::move(res));
  }
  return d;
}

}  // namespace qvae
