#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "qvae/config.hpp"
#include "qvae/cvae.hpp"
#include "qvae/dataset.hpp"
#include "qvae/estimators.hpp"
#include "qvae/measure.hpp"
#include "qvae/mps.hpp"
#include "qvae/report.hpp"

namespace qvae {

/// Output layout under the run directory.
struct RunPaths {
  std::filesystem::path root;

  explicit RunPaths(std::filesystem::path r) : root(std::move(r)) {}
  std::filesystem::path state(std::size_t group) const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "state_%03zu.mps", group);
    return root / "groundstate" / buf;
  }
  std::filesystem::path energies() const { return root / "energies.csv"; }
  std::filesystem::path dataset() const { return root / "dataset.qvd"; }
  std::filesystem::path model() const { return root / "model.cva"; }
  std::filesystem::path loss() const { return root / "loss.csv"; }
  std::filesystem::path magnetization() const { return root / "magnetization.csv"; }
  std::filesystem::path correlations() const { return root / "correlations.csv"; }
  std::filesystem::path mass_compare() const { return root / "mass_compare.csv"; }
  std::filesystem::path renyi2() const { return root / "renyi2.csv"; }
  std::filesystem::path susceptibility() const { return root / "susceptibility.csv"; }
};

/// Progress messages go here (stderr by default); results go to files.
using Log = std::function<void(const std::string&)>;

inline Log stderr_log() {
  return [](const std::string& s) { std::cerr << s << "\n"; };
}

namespace detail {

inline std::size_t grid_index(const RunConfig& c, double h, const char* what) {
  for (std::size_t g = 0; g < c.grid.size(); ++g)
    if (std::abs(c.grid[g] - h) < 1e-9) return g;
  throw ConfigError(std::string(what) + " h=" + format_field(h) + " is not a grid field");
}

inline Mps load_state(const RunPaths& p, std::size_t g) {
  const auto path = p.state(g);
  if (!std::filesystem::exists(path)) throw ConfigError("missing checkpoint " + path.string() + " (run groundstate)");
  return load_mps(path.string());
}

inline std::vector<Mps> load_states(const RunConfig& c, const RunPaths& p) {
  std::vector<Mps> out;
  for (std::size_t g = 0; g < c.grid.size(); ++g) {
    Mps m = load_state(p, g);
    if (m.sites.size() != c.n_sites) throw ConfigError("checkpoint " + p.state(g).string() + " has the wrong length");
    out.push_back(std::move(m));
  }
  return out;
}

inline CvaeModel load_trained(const RunConfig& c, const RunPaths& p) {
  if (!std::filesystem::exists(p.model())) throw ConfigError("missing model " + p.model().string() + " (run train)");
  CvaeModel m = load_model(p.model().string());
  if (m.n_sites != c.n_sites) throw ConfigError("model chain length does not match the config");
  return m;
}

inline double mean_local(const Mps& psi, const RealTensor& op) {
  double acc = 0;
  for (std::size_t i = 0; i < psi.sites.size(); ++i) acc += expect_local(psi, op, i);
  return acc / static_cast<double>(psi.sites.size());
}

inline void add_estimate(Report& r, const std::string& obs, double h, const std::string& index, const Estimate& e,
                         const std::string& source) {
  r.add({obs, h, index, e.value, e.std_error, source, e.count});
}

}  // namespace detail

/// DMRG at every grid field; one MPS checkpoint per field and an energy CSV.
inline void cmd_groundstate(const RunConfig& c, const Log& log = stderr_log()) {
  const RunPaths p(c.output_dir);
  std::filesystem::create_directories(p.root / "groundstate");
  std::string csv = "h,energy,seed\n";
  for (std::size_t g = 0; g < c.grid.size(); ++g) {
    const DmrgResult r = solve_field(c.model(), c.grid[g], c.dmrg(), c.seed, g);
    save_mps(r.state, p.state(g).string());
    csv += format_double(c.grid[g]) + "," + format_double(r.energy) + "," + std::to_string(r.seed) + "\n";
    log("groundstate h=" + format_field(c.grid[g]) + " energy=" + format_double(r.energy));
  }
  Report::write_text(p.energies().string(), csv);
}

/// Measurement records for every grid field from the saved ground states.
inline Dataset cmd_sample(const RunConfig& c, const Log& log = stderr_log()) {
  const RunPaths p(c.output_dir);
  const auto states = detail::load_states(c, p);
  Dataset d;
  d.n_sites = c.n_sites;
  d.seed = c.seed;
  d.bond_dim = c.bond_dim;
  d.sweeps = c.sweeps;
  for (std::size_t g = 0; g < c.grid.size(); ++g) {
    d.groups.push_back({c.grid[g], sample_field(states[g], c.grid[g], c.samples_per_field, c.seed, g)});
    log("sample h=" + format_field(c.grid[g]) + " records=" + std::to_string(c.samples_per_field));
  }
  save_dataset(d, p.dataset().string());
  return d;
}

/// Trains the conditional VAE on the saved dataset; writes the checkpoint and
/// the per-epoch ELBO.
inline CvaeModel cmd_train(const RunConfig& c, const Log& log = stderr_log()) {
  const RunPaths p(c.output_dir);
  if (!std::filesystem::exists(p.dataset())) throw ConfigError("missing dataset " + p.dataset().string() + " (run sample)");
  const Dataset d = load_dataset(p.dataset().string());
  if (d.n_sites != c.n_sites) throw ConfigError("dataset chain length does not match the config");
  CvaeModel m = train(d, c.train, [&](std::size_t e, double v, const CvaeModel&) {
    log("train epoch=" + std::to_string(e + 1) + " elbo=" + format_double(v));
  });
  save_model(m, p.model().string());
  std::string csv = "epoch,elbo\n";
  for (std::size_t e = 0; e < m.loss_history.size(); ++e)
    csv += std::to_string(e + 1) + "," + format_double(m.loss_history[e]) + "\n";
  Report::write_text(p.loss().string(), csv);
  return m;
}

/// Estimate reports from the exact states, exact-sampler records and model
/// samples: magnetization curves, correlations, mass comparison, Renyi-2.
inline void cmd_estimate(const RunConfig& c, const Log& log = stderr_log()) {
  const RunPaths p(c.output_dir);
  const auto states = detail::load_states(c, p);
  const CvaeModel model = detail::load_trained(c, p);
  const PovmFrame f = tetrahedral_frame();
  const ObservableCoeffs bx = observable_coeffs(pauli::x(), f, "x"), bz = observable_coeffs(pauli::z(), f, "z");
  const AnalysisConfig& a = c.analysis;
  std::uint64_t stream = 0;
  auto next_seed = [&] { return derive_seed(a.seed, stream++); };

  Report mag;
  for (std::size_t g = 0; g < c.grid.size(); ++g) {
    const double h = c.grid[g];
    mag.add({"mu_x", h, "", detail::mean_local(states[g], pauli::x()), 0.0, "exact", 0});
    mag.add({"mu_z", h, "", detail::mean_local(states[g], pauli::z()), 0.0, "exact", 0});
    const Samples ms = sample_state_povm(states[g], f, a.mps_samples, next_seed());
    detail::add_estimate(mag, "mu_x", h, "", total_magnetization(ms, bx), "mps-samples");
    detail::add_estimate(mag, "mu_z", h, "", total_magnetization(ms, bz), "mps-samples");
    const Samples vs = generate(model, h, a.vae_samples, next_seed());
    detail::add_estimate(mag, "mu_x", h, "", total_magnetization(vs, bx), "vae-samples");
    detail::add_estimate(mag, "mu_z", h, "", total_magnetization(vs, bz), "vae-samples");
    log("estimate magnetization h=" + format_field(h));
  }
  mag.write(p.magnetization().string());

  Report corr;
  for (double h : a.corr_fields) {
    const std::size_t g = detail::grid_index(c, h, "analysis.corr_fields");
    const Mps& psi = states[g];
    const Samples ms = sample_state_povm(psi, f, a.mps_samples, next_seed());
    const Samples vs = generate(model, h, a.vae_samples, next_seed());
    for (std::size_t n = 0; n < c.n_sites; ++n) {
      const std::string site = std::to_string(n + 1), pair = "1-" + site;
      corr.add({"mean_x", h, site, expect_local(psi, pauli::x(), n), 0.0, "exact", 0});
      detail::add_estimate(corr, "mean_x", h, site, one_point(ms, bx, n), "mps-samples");
      detail::add_estimate(corr, "mean_x", h, site, one_point(vs, bx, n), "vae-samples");
      if (n == 0) continue;
      corr.add({"corr_zz", h, pair, expect_two_point(psi, pauli::z(), 0, pauli::z(), n), 0.0, "exact", 0});
      detail::add_estimate(corr, "corr_zz", h, pair, two_point(ms, bz, 0, bz, n), "mps-samples");
      detail::add_estimate(corr, "corr_zz", h, pair, two_point(vs, bz, 0, bz, n), "vae-samples");
      corr.add({"corr_xx", h, pair, expect_two_point(psi, pauli::x(), 0, pauli::x(), n), 0.0, "exact", 0});
      detail::add_estimate(corr, "corr_xx", h, pair, two_point(ms, bx, 0, bx, n), "mps-samples");
      detail::add_estimate(corr, "corr_xx", h, pair, two_point(vs, bx, 0, bx, n), "vae-samples");
    }
    log("estimate correlations h=" + format_field(h));
  }
  corr.write(p.correlations().string());

  if (c.n_sites <= 8) {
    const std::size_t g = detail::grid_index(c, a.mass_field, "analysis.mass_field");
    const auto exact = mass_table(mass_function_mps(states[g], f));
    const MassTable vae = vae_mass_table(model, a.mass_field, MassTableMode::latent, a.mass_draws, next_seed());
    Report mass;
    mass.add({"bc", a.mass_field, "", bhattacharyya(exact, vae.p), 0.0, "vae-latent", vae.draws});
    for (std::size_t idx = 0; idx < exact.size(); ++idx) {
      mass.add({"mass", a.mass_field, std::to_string(idx), exact[idx], 0.0, "exact", 0});
      mass.add({"mass", a.mass_field, std::to_string(idx), vae.p[idx], vae.std_error[idx], "vae-latent", vae.draws});
    }
    mass.write(p.mass_compare().string());
    log("estimate mass_compare bc=" + format_double(mass.rows().front().value));
  }

  {
    const double h = a.renyi_field;
    const Mps& psi = states[detail::grid_index(c, h, "analysis.renyi_field")];
    const Samples ms = sample_state_povm(psi, f, 2 * a.renyi_pairs, next_seed());
    const Samples vs = generate(model, h, 2 * a.renyi_pairs, next_seed());
    Report ren;
    for (std::size_t n_left = 1; n_left < c.n_sites; ++n_left) {
      const std::string idx = std::to_string(n_left);
      if (std::min(n_left, c.n_sites - n_left) <= 10) {
        // S2 of a block equals S2 of its complement for a pure state.
        double s2;
        if (n_left <= 10) {
          s2 = renyi2_exact(psi, n_left);
        } else {
          Mps rev = psi;
          std::reverse(rev.sites.begin(), rev.sites.end());
          for (auto& t : rev.sites) t = t.permuted({2, 1, 0});
          rev.center.reset();
          s2 = renyi2_exact(rev, c.n_sites - n_left);
        }
        ren.add({"renyi2", h, idx, s2, 0.0, "exact", 0});
      }
      for (const auto& [s, src] : {std::pair{&ms, "mps-samples"}, std::pair{&vs, "vae-samples"}}) {
        const Renyi2Estimate e = renyi2_pair_estimator(*s, n_left, f);
        ren.add({"renyi2", h, idx, e.value, e.std_error, src, e.pairs});
      }
    }
    ren.write(p.renyi2().string());
    log("estimate renyi2 h=" + format_field(h));
  }
}

/// chi_xx and chi_zx at every grid field: backprop through the relaxed
/// samples next to central differences of hard samples on shared noise.
inline void cmd_susceptibility(const RunConfig& c, const Log& log = stderr_log()) {
  const RunPaths p(c.output_dir);
  const CvaeModel model = detail::load_trained(c, p);
  const PovmFrame f = tetrahedral_frame();
  const AnalysisConfig& a = c.analysis;
  std::string csv = "observable,h,chi_backprop,se_backprop,chi_central,se_central,temperature,K\n";
  for (std::size_t g = 0; g < c.grid.size(); ++g) {
    const double h = c.grid[g];
    for (const auto& [name, op] : {std::pair{"chi_xx", pauli::x()}, std::pair{"chi_zx", pauli::z()}}) {
      const SusceptibilityResult s =
          susceptibility(model, h, observable_coeffs(op, f), a.susceptibility_draws, a.temperature,
                         derive_seed(a.seed, 1000 + g), a.difference_step);
      csv += std::string(name) + "," + format_double(h) + "," + format_double(s.chi) + "," + format_double(s.chi_error) +
             "," + format_double(s.central) + "," + format_double(s.central_error) + "," + format_double(a.temperature) +
             "," + std::to_string(s.draws) + "\n";
    }
    log("susceptibility h=" + format_field(h));
  }
  Report::write_text(p.susceptibility().string(), csv);
}

struct ValidationLine {
  std::string check;
  bool pass = false;
  std::string detail;
};

/// Integrity and consistency of the artifacts present under the run
/// directory, plus quick self-checks of the numerical core.
inline std::vector<ValidationLine> cmd_validate(const RunConfig& c) {
  std::vector<ValidationLine> out;
  auto run = [&](const std::string& name, const std::function<std::string()>& body) {
    try {
      out.push_back({name, true, body()});
    } catch (const Error& e) {
      out.push_back({name, false, "kind=" + e.kind() + " " + e.what()});
    } catch (const std::exception& e) {
      out.push_back({name, false, e.what()});
    }
  };
  run("frame_algebra", [] {
    const PovmFrame f = tetrahedral_frame();
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t b = 0; b < 4; ++b) {
        const double t = a == b ? 0.25 : 1.0 / 12, ti = a == b ? 5.0 : -1.0;
        if (std::abs(f.overlap(a, b) - t) > 1e-12 || std::abs(f.overlap_inverse(a, b) - ti) > 1e-10)
          throw ValidationError("overlap matrix entry (" + std::to_string(a) + "," + std::to_string(b) + ") is off");
      }
    return std::string("T and T^-1 as expected");
  });
  run("two_site_energy", [] {
    DmrgOptions o;
    o.seed = 1;
    const double e = dmrg_ground_state(tfi_mpo({2, 1.0, 1.0, 0.0}), o).energy;
    if (std::abs(e + std::sqrt(5.0)) > 1e-10) throw ValidationError("N=2 energy " + format_double(e));
    return "energy " + format_double(e);
  });
  const RunPaths p(c.output_dir);
  if (std::filesystem::exists(p.root / "groundstate")) {
    run("groundstate_checkpoints", [&] {
      const auto states = detail::load_states(c, p);
      return std::to_string(states.size()) + " checkpoints";
    });
  }
  if (std::filesystem::exists(p.dataset())) {
    run("dataset", [&] {
      const Dataset d = load_dataset(p.dataset().string());
      if (d.n_sites != c.n_sites) throw ValidationError("dataset chain length does not match the config");
      if (d.groups.size() != c.grid.size()) throw ValidationError("dataset group count does not match the grid");
      for (std::size_t g = 0; g < d.groups.size(); ++g) {
        if (std::abs(d.groups[g].field - c.grid[g]) > 1e-12)
          throw ValidationError("dataset group " + std::to_string(g) + " field does not match the grid");
        if (d.groups[g].samples.count() != c.samples_per_field)
          throw ValidationError("dataset group " + std::to_string(g) + " has the wrong record count");
      }
      return std::to_string(d.total_records()) + " records";
    });
  }
  if (std::filesystem::exists(p.model())) {
    run("model", [&] {
      const CvaeModel m = detail::load_trained(c, p);
      return std::to_string(m.encoder.parameter_count() + m.decoder.parameter_count()) + " parameters, " +
             std::to_string(m.loss_history.size()) + " epochs";
    });
  }
  return out;
}

}  // namespace qvae
