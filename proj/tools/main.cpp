// Command line front end: run scenarios, train the lean model, self-check.

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "selfcheck.hpp"
#include "sphero/harness.hpp"
#include "sphero/mlp.hpp"

namespace fs = std::filesystem;
using namespace sphero;

namespace {

std::string opt(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", *v);
  return buf;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

void print_summary(const ScenarioResult& r) {
  const Metrics& m = r.metrics;
  std::cout << r.scenario.name << ": v t_r=" << opt(m.velocity.t_r)
            << " sigma=" << opt(m.velocity.sigma) << " t_s=" << opt(m.velocity.t_s)
            << " e_rmse=" << num(m.velocity.e_rmse) << " | phi t_r=" << opt(m.roll.t_r)
            << " sigma=" << opt(m.roll.sigma) << " t_s=" << opt(m.roll.t_s)
            << " e_rmse=" << num(m.roll.e_rmse) << " | Q=" << num(m.energy_Q)
            << " flagged=" << r.flagged_cycles;
  if (r.path_error_max) std::cout << " path_err=" << num(*r.path_error_max);
  std::cout << '\n';
}

constexpr const char* kTableHeader =
    "scenario,v_t_r,v_sigma,v_t_s,v_e_rmse,phi_t_r,phi_sigma,phi_t_s,phi_e_rmse,"
    "energy_Q,i_aa_1,i_aa_2,flagged,path_error_max\n";

std::string table_row(const ScenarioResult& r) {
  const Metrics& m = r.metrics;
  const auto cell = [](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
  std::string row = r.scenario.name;
  for (const std::string& c :
       {cell(m.velocity.t_r), cell(m.velocity.sigma), cell(m.velocity.t_s), num(m.velocity.e_rmse),
        cell(m.roll.t_r), cell(m.roll.sigma), cell(m.roll.t_s), num(m.roll.e_rmse),
        num(m.energy_Q), num(m.i_aa_1), num(m.i_aa_2), std::to_string(r.flagged_cycles),
        cell(r.path_error_max)}) {
    row += ',' + c;
  }
  return row + '\n';
}

std::vector<double> linspace_grid(double lo, double hi, int count) {
  if (count < 1) throw std::invalid_argument("grid: count must be positive");
  std::vector<double> g;
  for (int i = 0; i < count; ++i) {
    g.push_back(count == 1 ? lo : lo + (hi - lo) * i / (count - 1));
  }
  return g;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pendulum-driven spherical robot motion control simulator"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::uint64_t seed = 1;
  std::string out_dir = "results";
  std::string mlp_path;
  auto* run = app.add_subcommand("run", "Run one scenario and export telemetry and metrics");
  run->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  run->add_option("--seed", seed, "Seed for lean-model training");
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--mlp", mlp_path, "Pre-trained lean model (JSON)");

  std::string suite_dir;
  std::string suite_out;
  auto* suite = app.add_subcommand("suite", "Run every scenario in a directory");
  suite->add_option("dir", suite_dir, "Directory of scenario JSON files")->required();
  suite->add_option("--seed", seed, "Seed for lean-model training");
  suite->add_option("--out", suite_out, "Output directory (default <dir>/results)");

  std::vector<double> grid;
  std::string model_out = "model.json";
  int hidden = 10;
  auto* train = app.add_subcommand("train-mlp", "Train the lean reference model");
  train->add_option("--grid", grid,
                    "v_min v_max n_v phi_min phi_max n_phi (default 0.2 1.0 9 -0.27 0.27 10)")
      ->expected(6);
  train->add_option("--hidden", hidden, "Hidden neurons");
  train->add_option("--seed", seed, "Split and initialization seed");
  train->add_option("--out", model_out, "Output model file");

  auto* check = app.add_subcommand("check", "Run oracle self-tests");
  check->add_option("--seed", seed, "Seed for the randomized checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const Scenario s = load_scenario(scenario_path);
      const ScenarioResult r = mlp_path.empty()
                                   ? run_scenario(s, seed)
                                   : run_scenario(s, seed, load_mlp(mlp_path));
      export_results(r, out_dir);
      print_summary(r);
      return 0;
    }
    if (*suite) {
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(suite_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") {
          files.push_back(entry.path());
        }
      }
      std::sort(files.begin(), files.end());
      if (files.empty()) {
        std::cerr << "suite: no scenario files in " << suite_dir << '\n';
        return 1;
      }
      const fs::path out = suite_out.empty() ? fs::path(suite_dir) / "results" : fs::path(suite_out);
      int errors = 0;
      std::string table = kTableHeader;
      for (const fs::path& f : files) {
        try {
          const Scenario s = load_scenario(f);
          const ScenarioResult r = run_scenario(s, seed);
          export_results(r, out);
          print_summary(r);
          table += table_row(r);
        } catch (const std::exception& e) {
          std::cerr << f.string() << ": " << e.what() << '\n';
          ++errors;
        }
      }
      write_file_atomic(out / "summary.csv", table);
      std::cout << "summary: " << (out / "summary.csv").string() << '\n';
      return errors == 0 ? 0 : 1;
    }
    if (*train) {
      std::vector<double> vg = default_v_grid();
      std::vector<double> pg = default_phi_grid();
      if (!grid.empty()) {
        vg = linspace_grid(grid[0], grid[1], static_cast<int>(grid[2]));
        pg = linspace_grid(grid[3], grid[4], static_cast<int>(grid[5]));
      }
      LMOptions opts;
      opts.hidden = hidden;
      opts.seed = seed;
      const BetaModel model = train_beta_model(RobotParams{}, vg, pg, opts);
      save_mlp(model.params, model_out);
      const auto test = model.dataset.subset(Split::Test);
      std::cout << "samples=" << model.dataset.samples.size()
                << " epochs=" << model.history.train_mse.size()
                << " stop=" << model.history.stop_reason
                << " test_mse=" << num(mean_squared_error(model.params, test)) << '\n';
      return 0;
    }
    if (*check) {
      bool ok = true;
      for (const auto& c : tools::run_all_checks(seed)) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
        ok = ok && c.passed;
      }
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
