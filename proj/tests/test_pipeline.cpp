#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "qvae/pipeline.hpp"

using namespace qvae;
namespace fs = std::filesystem;

namespace {

RunConfig tiny(const fs::path& out) {
  RunConfig c;
  c.n_sites = 4;
  c.grid = {0.5, 1.0};
  c.samples_per_field = 2000;
  c.train.batch_size = 250;
  c.train.epochs = 2;
  c.train.hidden = {12};
  c.analysis.vae_samples = 1000;
  c.analysis.mps_samples = 1000;
  c.analysis.corr_fields = {0.5};
  c.analysis.mass_field = 1.0;
  c.analysis.mass_draws = 200;
  c.analysis.renyi_field = 1.0;
  c.analysis.renyi_pairs = 500;
  c.analysis.susceptibility_draws = 200;
  c.output_dir = out.string();
  return c;
}

void run_all(const RunConfig& c) {
  const Log quiet = [](const std::string&) {};
  cmd_groundstate(c, quiet);
  cmd_sample(c, quiet);
  cmd_train(c, quiet);
  cmd_estimate(c, quiet);
  cmd_susceptibility(c, quiet);
}

std::vector<std::uint8_t> bytes_of(const fs::path& p) { return binio::read_file(p.string()); }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("qvae_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Config, DefaultsMirrorFullScale) {
  const RunConfig c;
  EXPECT_EQ(c.bond_dim, 25u);
  EXPECT_EQ(c.sweeps, 5u);
  EXPECT_EQ(c.train.lr, 1e-3);
  EXPECT_EQ(c.train.batch_size, 100000u);
  EXPECT_EQ(c.train.epochs, 750u);
  ASSERT_EQ(c.grid.size(), 21u);
  EXPECT_DOUBLE_EQ(c.grid[9], 0.9);
  EXPECT_EQ(c.train.hidden, (std::vector<std::size_t>{256, 256}));
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, RoundTrip) {
  RunConfig c = tiny("some/dir");
  c.init = DmrgInit::polarized;
  c.symmetry_break_z = 1e-3;
  c.train.activation = Activation::tanh;
  c.train.scaling = {0.9, 1.3};
  c.analysis.temperature = 0.25;
  c.seed = 0xfedcba9876543210ull;
  const RunConfig r = parse_config(serialize_config(c));
  EXPECT_TRUE(r == c);
  EXPECT_EQ(serialize_config(r), serialize_config(c));
  EXPECT_TRUE(parse_config(serialize_config(RunConfig{})) == RunConfig{});
}

TEST(Config, PartialFileKeepsDefaults) {
  const RunConfig c = parse_config(R"({"model": {"n_sites": 6}, "train": {"epochs": 3}})");
  EXPECT_EQ(c.n_sites, 6u);
  EXPECT_EQ(c.train.epochs, 3u);
  EXPECT_EQ(c.train.batch_size, 100000u);
  EXPECT_EQ(c.grid.size(), 21u);
}

TEST(Config, Rejections) {
  EXPECT_THROW(parse_config("{"), ConfigError);
  EXPECT_THROW(parse_config(R"({"modle": {}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"model": {"n_sits": 4}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"model": {"grid": [0.5, 0.2]}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"model": {"grid": [0.5, 0.5]}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"model": {"grid": []}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"train": {"epochs": 0}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"train": {"activation": "gelu"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"dmrg": {"init": "warm"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"dataset": {"samples_per_field": "many"}})"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Pipeline, MissingArtifactsAreConfigErrors) {
  const RunConfig c = tiny(scratch("missing"));
  const Log quiet = [](const std::string&) {};
  EXPECT_THROW(cmd_sample(c, quiet), ConfigError);
  EXPECT_THROW(cmd_train(c, quiet), ConfigError);
  EXPECT_THROW(cmd_estimate(c, quiet), ConfigError);
  EXPECT_THROW(cmd_susceptibility(c, quiet), ConfigError);
}

TEST(Pipeline, RerunsAreByteIdentical) {
  const fs::path a = scratch("a"), b = scratch("b");
  run_all(tiny(a));
  run_all(tiny(b));
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    EXPECT_EQ(bytes_of(e.path()), bytes_of(b / rel)) << rel;
    ++files;
  }
  EXPECT_EQ(files, 2u + 9u);
}

TEST(Pipeline, TwoSiteEnergyColumn) {
  RunConfig c = tiny(scratch("two"));
  c.n_sites = 2;
  c.grid = {1.0};
  c.symmetry_break_z = 0;
  cmd_groundstate(c, [](const std::string&) {});
  std::ifstream in(RunPaths(c.output_dir).energies());
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "h,energy,seed");
  EXPECT_NEAR(std::stod(row.substr(row.find(',') + 1)), -std::sqrt(5.0), 1e-10);
}

TEST(Pipeline, ValidateCatchesCorruption) {
  const fs::path dir = scratch("corrupt");
  const RunConfig c = tiny(dir);
  run_all(c);
  for (const auto& line : cmd_validate(c)) EXPECT_TRUE(line.pass) << line.check << ": " << line.detail;

  const RunPaths p(dir);
  // Truncated dataset: the error names the byte offset.
  auto data = bytes_of(p.dataset());
  data.resize(data.size() - 100);
  binio::write_file(p.dataset().string(), data);
  try {
    load_dataset(p.dataset().string());
    FAIL() << "truncated dataset accepted";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
  }
  // Tampered model: checksum fails closed.
  auto model = bytes_of(p.model());
  model[model.size() / 3] ^= 1;
  binio::write_file(p.model().string(), model);
  bool dataset_failed = false, model_failed = false;
  for (const auto& line : cmd_validate(c)) {
    if (line.check == "dataset") dataset_failed = !line.pass;
    if (line.check == "model") {
      model_failed = !line.pass;
      EXPECT_NE(line.detail.find("checksum"), std::string::npos) << line.detail;
    }
  }
  EXPECT_TRUE(dataset_failed);
  EXPECT_TRUE(model_failed);
  EXPECT_THROW(cmd_estimate(c, [](const std::string&) {}), FormatError);
}
