// qvae: ground states, measurement datasets, VAE training and estimate
// reports for the transverse-field Ising chain.

#include <CLI11.hpp>
#include <Eigen/Core>
#include <iostream>
#include <json.hpp>

#include "qvae/pipeline.hpp"

namespace {

int exit_code(const std::string& kind) {
  if (kind == "config") return 2;
  if (kind == "format") return 3;
  if (kind == "validation") return 4;
  return 5;
}

void error_line(const std::string& kind, const std::string& message) {
  // One JSON object per line so callers can parse it.
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qvae: POVM-VAE reconstruction pipeline for the transverse-field Ising chain"};
  app.require_subcommand(1, 1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  const std::vector<std::pair<std::string, std::string>> verbs{
      {"groundstate", "DMRG ground state per grid field (MPS checkpoints, energies.csv)"},
      {"sample", "tetrahedral-POVM records per field from the checkpoints (dataset.qvd)"},
      {"train", "train the conditional VAE on the dataset (model.cva, loss.csv)"},
      {"estimate", "magnetization, correlation, mass and Renyi-2 reports"},
      {"susceptibility", "chi_xx and chi_zx by backprop and central differences"},
      {"validate", "check artifact integrity and core self-tests"}};
  std::vector<CLI::App*> subs;
  for (const auto& [name, help] : verbs) {
    CLI::App* s = app.add_subcommand(name, help);
    s->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    s->add_option("--out", out_dir, "output directory (overrides output_dir)");
    s->add_option("--seed", seed, "master dataset seed (overrides dataset.seed)");
    s->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    subs.push_back(s);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    error_line("usage", e.what());
    return 64;
  }

  try {
    qvae::RunConfig cfg;
    if (!config_path.empty()) cfg = qvae::load_config(config_path);
    for (CLI::App* s : subs) {
      if (s->count("--out")) cfg.output_dir = out_dir;
      if (s->count("--seed")) cfg.seed = seed;
      if (s->count("--threads")) cfg.threads = threads;
    }
    cfg.validate();
    Eigen::setNbThreads(static_cast<int>(cfg.threads));
    std::filesystem::create_directories(cfg.output_dir);

    const std::string verb = app.get_subcommands().front()->get_name();
    if (verb == "groundstate") {
      qvae::cmd_groundstate(cfg);
    } else if (verb == "sample") {
      const qvae::Dataset d = qvae::cmd_sample(cfg);
      for (const auto& g : d.groups)
        std::cout << "group h=" << qvae::format_field(g.field) << " records=" << g.samples.count() << "\n";
    } else if (verb == "train") {
      const qvae::CvaeModel m = qvae::cmd_train(cfg);
      std::cout << "final_elbo=" << qvae::format_double(m.loss_history.back()) << "\n";
    } else if (verb == "estimate") {
      qvae::cmd_estimate(cfg);
    } else if (verb == "susceptibility") {
      qvae::cmd_susceptibility(cfg);
    } else if (verb == "validate") {
      bool ok = true;
      for (const auto& line : qvae::cmd_validate(cfg)) {
        std::cout << (line.pass ? "PASS " : "FAIL ") << line.check << ": " << line.detail << "\n";
        ok = ok && line.pass;
        if (!line.pass) error_line("validation", line.check + ": " + line.detail);
      }
      return ok ? 0 : 1;
    }
    return 0;
  } catch (const qvae::Error& e) {
    error_line(e.kind(), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    error_line("internal", e.what());
    return 70;
  }
}
