#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qvae/cvae.hpp"
#include "qvae/dmrg.hpp"
#include "qvae/error.hpp"
#include "qvae/tfi.hpp"

namespace qvae {

/// Settings for the estimate and susceptibility commands.
struct AnalysisConfig {
  std::size_t vae_samples = 1000000;   // generated records per field for VAE estimates
  std::size_t mps_samples = 1000000;   // exact-sampler records for reference estimates
  std::vector<double> corr_fields{0.0, 0.5, 0.9, 1.5};
  double mass_field = 0.9;             // mass_compare field (needs N <= 8)
  std::size_t mass_draws = 100000;     // latent points for the model mass table
  double renyi_field = 0.9;
  std::size_t renyi_pairs = 1000000;
  double temperature = 0.5;
  std::size_t susceptibility_draws = 100000;
  double difference_step = 0.05;
  std::uint64_t seed = 7;

  bool operator==(const AnalysisConfig&) const = default;
};

struct RunConfig {
  // Model
  std::size_t n_sites = 32;
  double coupling = 1.0;
  std::vector<double> grid;  // filled with 0, 0.1, ..., 2 by default
  double symmetry_break_z = 0.0;
  // DMRG
  std::size_t bond_dim = 25;
  std::size_t sweeps = 5;
  double cutoff = 1e-12;
  double lanczos_tol = 1e-11;
  DmrgInit init = DmrgInit::random;
  // Dataset
  std::size_t samples_per_field = 500000;
  std::uint64_t seed = 2024;
  // Training
  TrainConfig train;
  AnalysisConfig analysis;
  std::string output_dir = "out";
  std::size_t threads = 1;

  RunConfig() {
    for (int k = 0; k <= 20; ++k) grid.push_back(k / 10.0);
  }

  TfiParams model() const { return {n_sites, coupling, 0.0, symmetry_break_z}; }
  DmrgOptions dmrg() const {
    DmrgOptions o;
    o.bond_dim = bond_dim;
    o.sweeps = sweeps;
    o.cutoff = cutoff;
    o.lanczos_tol = lanczos_tol;
    o.init = init;
    return o;
  }

  void validate() const {
    if (n_sites < 2) throw ConfigError("model.n_sites must be >= 2");
    if (grid.empty()) throw ConfigError("model.grid is empty");
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (!std::isfinite(grid[i])) throw ConfigError("model.grid has a non-finite value");
      if (i > 0 && !(grid[i] > grid[i - 1])) throw ConfigError("model.grid must be sorted and unique");
    }
    if (bond_dim < 1 || sweeps < 1) throw ConfigError("dmrg.bond_dim and dmrg.sweeps must be >= 1");
    if (samples_per_field < 1) throw ConfigError("dataset.samples_per_field must be >= 1");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (analysis.vae_samples < 2 || analysis.mps_samples < 2 || analysis.mass_draws < 1 || analysis.renyi_pairs < 1 ||
        analysis.susceptibility_draws < 1)
      throw ConfigError("analysis counts must be positive");
    if (!(analysis.temperature > 0)) throw ConfigError("analysis.temperature must be positive");
    if (!(analysis.difference_step > 0)) throw ConfigError("analysis.difference_step must be positive");
    try {
      train.validate();
    } catch (const Error& e) {
      throw ConfigError(std::string("train: ") + e.what());
    }
  }

  bool operator==(const RunConfig& o) const {
    return n_sites == o.n_sites && coupling == o.coupling && grid == o.grid && symmetry_break_z == o.symmetry_break_z &&
           bond_dim == o.bond_dim && sweeps == o.sweeps && cutoff == o.cutoff && lanczos_tol == o.lanczos_tol &&
           init == o.init && samples_per_field == o.samples_per_field && seed == o.seed &&
           train.batch_size == o.train.batch_size && train.epochs == o.train.epochs && train.lr == o.train.lr &&
           train.beta1 == o.train.beta1 && train.beta2 == o.train.beta2 && train.epsilon == o.train.epsilon &&
           train.mc_samples == o.train.mc_samples && train.seed == o.train.seed && train.hidden == o.train.hidden &&
           train.activation == o.train.activation && train.scaling == o.train.scaling && analysis == o.analysis &&
           output_dir == o.output_dir && threads == o.threads;
  }
};

namespace detail {

using nlohmann::json;

// Reads `key` into `out` when present; rejects keys the schema does not know.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(name_ + " must be an object");
  }
  template <class T>
  void get(const char* key, T& out) {
    seen_.push_back(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    }
  }
  const json* child(const char* key) {
    seen_.push_back(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
        throw ConfigError("unknown key " + name_ + "." + it.key());
  }

 private:
  const json& j_;
  std::string name_;
  std::vector<std::string> seen_;
};

inline std::string init_name(DmrgInit i) { return i == DmrgInit::polarized ? "polarized" : "random"; }

inline DmrgInit parse_init(const std::string& s) {
  if (s == "random") return DmrgInit::random;
  if (s == "polarized") return DmrgInit::polarized;
  throw ConfigError("dmrg.init must be \"random\" or \"polarized\", got \"" + s + "\"");
}

}  // namespace detail

inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["model"] = {{"n_sites", c.n_sites},
                {"coupling", c.coupling},
                {"grid", c.grid},
                {"symmetry_break_z", c.symmetry_break_z}};
  j["dmrg"] = {{"bond_dim", c.bond_dim},
               {"sweeps", c.sweeps},
               {"cutoff", c.cutoff},
               {"lanczos_tol", c.lanczos_tol},
               {"init", detail::init_name(c.init)}};
  j["dataset"] = {{"samples_per_field", c.samples_per_field}, {"seed", c.seed}};
  const TrainConfig& t = c.train;
  j["train"] = {{"batch_size", t.batch_size},     {"epochs", t.epochs},
                {"lr", t.lr},                     {"beta1", t.beta1},
                {"beta2", t.beta2},               {"epsilon", t.epsilon},
                {"mc_samples", t.mc_samples},     {"seed", t.seed},
                {"hidden", t.hidden},             {"activation", activation_name(t.activation)},
                {"field_center", t.scaling.center}, {"field_halfwidth", t.scaling.halfwidth}};
  const AnalysisConfig& a = c.analysis;
  j["analysis"] = {{"vae_samples", a.vae_samples},
                   {"mps_samples", a.mps_samples},
                   {"corr_fields", a.corr_fields},
                   {"mass_field", a.mass_field},
                   {"mass_draws", a.mass_draws},
                   {"renyi_field", a.renyi_field},
                   {"renyi_pairs", a.renyi_pairs},
                   {"temperature", a.temperature},
                   {"susceptibility_draws", a.susceptibility_draws},
                   {"difference_step", a.difference_step},
                   {"seed", a.seed}};
  j["output_dir"] = c.output_dir;
  j["threads"] = c.threads;
  return j;
}

/// Missing keys keep their defaults; unknown keys are errors.
inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  detail::Section top(j, "config");
  if (const auto* m = top.child("model")) {
    detail::Section s(*m, "model");
    s.get("n_sites", c.n_sites);
    s.get("coupling", c.coupling);
    s.get("grid", c.grid);
    s.get("symmetry_break_z", c.symmetry_break_z);
    s.finish();
  }
  if (const auto* d = top.child("dmrg")) {
    detail::Section s(*d, "dmrg");
    s.get("bond_dim", c.bond_dim);
    s.get("sweeps", c.sweeps);
    s.get("cutoff", c.cutoff);
    s.get("lanczos_tol", c.lanczos_tol);
    std::string init = detail::init_name(c.init);
    s.get("init", init);
    c.init = detail::parse_init(init);
    s.finish();
  }
  if (const auto* d = top.child("dataset")) {
    detail::Section s(*d, "dataset");
    s.get("samples_per_field", c.samples_per_field);
    s.get("seed", c.seed);
    s.finish();
  }
  if (const auto* t = top.child("train")) {
    detail::Section s(*t, "train");
    TrainConfig& tc = c.train;
    s.get("batch_size", tc.batch_size);
    s.get("epochs", tc.epochs);
    s.get("lr", tc.lr);
    s.get("beta1", tc.beta1);
    s.get("beta2", tc.beta2);
    s.get("epsilon", tc.epsilon);
    s.get("mc_samples", tc.mc_samples);
    s.get("seed", tc.seed);
    s.get("hidden", tc.hidden);
    std::string act = activation_name(tc.activation);
    s.get("activation", act);
    tc.activation = parse_activation(act);
    s.get("field_center", tc.scaling.center);
    s.get("field_halfwidth", tc.scaling.halfwidth);
    s.finish();
  }
  if (const auto* a = top.child("analysis")) {
    detail::Section s(*a, "analysis");
    AnalysisConfig& ac = c.analysis;
    s.get("vae_samples", ac.vae_samples);
    s.get("mps_samples", ac.mps_samples);
    s.get("corr_fields", ac.corr_fields);
    s.get("mass_field", ac.mass_field);
    s.get("mass_draws", ac.mass_draws);
    s.get("renyi_field", ac.renyi_field);
    s.get("renyi_pairs", ac.renyi_pairs);
    s.get("temperature", ac.temperature);
    s.get("susceptibility_draws", ac.susceptibility_draws);
    s.get("difference_step", ac.difference_step);
    s.get("seed", ac.seed);
    s.finish();
  }
  top.get("output_dir", c.output_dir);
  top.get("threads", c.threads);
  top.finish();
  c.validate();
  return c;
}

inline std::string serialize_config(const RunConfig& c) { return config_to_json(c).dump(2) + "\n"; }

inline RunConfig parse_config(const std::string& text, const std::string& what = "config") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(what + ": " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

}  // namespace qvae
