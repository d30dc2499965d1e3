#pragma once

// Shared fixtures for the unit-test suite: hand-built datasets, scenario
// draws, temp-file plumbing, and a thin wrapper around the CLI binary.

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dualframe/dataset.hpp"
#include "dualframe/simgen.hpp"

namespace testutil {

inline constexpr double NA = dualframe::kNaN;

// Build a dataset from parallel per-unit vectors; x is row-major flattened.
inline dualframe::DualFrameDataset make_ds(const std::vector<long long>& ids, const std::vector<int>& dnp,
                                           const std::vector<int>& dp, const std::vector<double>& pip,
                                           const std::vector<double>& y, const std::vector<double>& xflat,
                                           int x_dim, std::vector<std::string> names = {}) {
  dualframe::DualFrameDataset ds;
  const int n = static_cast<int>(ids.size());
  ds.ids = ids;
  for (int d : dnp) ds.delta_np.push_back(static_cast<std::uint8_t>(d));
  for (int d : dp) ds.delta_p.push_back(static_cast<std::uint8_t>(d));
  ds.pi_p = Eigen::Map<const dualframe::VectorXd>(pip.data(), n);
  ds.y = Eigen::Map<const dualframe::VectorXd>(y.data(), n);
  ds.x.resize(n, x_dim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < x_dim; ++j) ds.x(i, j) = xflat[static_cast<size_t>(i * x_dim + j)];
  if (names.empty())
    for (int j = 0; j < x_dim; ++j) names.push_back("x" + std::to_string(j + 1));
  ds.covariate_names = std::move(names);
  return ds;
}

// One simulated scenario draw (validated dual-frame dataset).
inline dualframe::DualFrameDataset scenario_draw(const std::string& scenario, int n_pop, std::uint64_t seed,
                                                 int rep = 0) {
  dualframe::ScenarioConfig cfg = dualframe::scenario_defaults(scenario);
  cfg.n_pop = n_pop;
  cfg.seed = seed;
  const dualframe::DualFrameDataset pop = dualframe::gen_population(cfg, rep);
  return dualframe::gen_samples(pop, cfg, rep);
}

// Scratch directory shared by the suite (fresh names per call).
inline std::filesystem::path tmp_dir() {
  const std::filesystem::path p = std::filesystem::temp_directory_path() / "dualframe_tests";
  std::filesystem::create_directories(p);
  return p;
}

inline std::string tmp_path(const std::string& name) { return (tmp_dir() / name).string(); }

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Run the built CLI with the given argument string; capture stdout/stderr.
inline CliResult run_cli(const std::string& args, const std::string& tag) {
  const std::string out_path = tmp_path("cli_" + tag + ".out");
  const std::string err_path = tmp_path("cli_" + tag + ".err");
  const std::string cmd = std::string(DUALFRAME_CLI_PATH) + " " + args + " >" + out_path + " 2>" + err_path;
  const int raw = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = (raw >= 0) ? ((raw >> 8) & 0xff) : raw;
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  return r;
}

}  // namespace testutil
