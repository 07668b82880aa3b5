#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "picforest/sim/simulation.hpp"

using namespace pic;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 1;

RunConfig load(const std::string& path, const std::vector<std::string>& overrides) {
  ConfigFile file = ConfigFile::load(path);
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    file.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return load_run_config(file);
}

bool is_config_error(const std::exception_ptr& cause) {
  if (!cause) return false;
  try {
    std::rethrow_exception(cause);
  } catch (const ConfigError&) {
    return true;
  } catch (...) {
    return false;
  }
}

void write_csv_file(const std::string& path, const auto& writer) {
  if (path.empty() || path == "-") {
    writer(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  writer(out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"picforest: particle-in-cell tracer advection on a quadtree forest"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;

  auto* run = app.add_subcommand("run", "Run a simulation from a configuration file");
  int run_ranks = 0;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  bool quiet = false;
  run->add_option("--config", config_path, "Configuration file")->required()->check(CLI::ExistingFile);
  run->add_option("--ranks", run_ranks, "Override run.ranks")->check(CLI::PositiveNumber);
  run->add_option("--seed", seed, "Override run.seed");
  run->add_option("--out", out_dir, "Output directory")->capture_default_str();
  run->add_option("--set", overrides, "Override any key, e.g. --set run.steps=20");
  run->add_flag("--quiet", quiet, "No progress lines");

  auto* bench = app.add_subcommand("bench", "Strong or weak scaling table");
  std::string bench_ranks = "1,2,4,8";
  std::string bench_mode = "strong";
  std::string bench_out;
  bench->add_option("--config", config_path, "Configuration file")->required()->check(CLI::ExistingFile);
  bench->add_option("--ranks", bench_ranks, "Comma-separated rank counts")->capture_default_str();
  bench->add_option("--mode", bench_mode, "strong or weak")->capture_default_str();
  bench->add_option("--set", overrides, "Override any key");
  bench->add_option("--out", bench_out, "CSV file (default stdout)");

  auto* converge = app.add_subcommand("converge", "Time-step convergence study against exact trajectories");
  ConvergenceSetup setup;
  std::string scheme = "rk2";
  std::string dts = "0.1,0.05,0.025,0.0125,0.00625";
  std::string conv_out;
  converge->add_option("--field", setup.field, "Field with a closed-form trajectory")->capture_default_str();
  converge->add_option("--scheme", scheme, "euler, rk2 or rk4")->capture_default_str();
  converge->add_option("--dts", dts, "Comma-separated step sizes")->capture_default_str();
  converge->add_option("--t-end", setup.t_end, "Final time")->capture_default_str();
  converge->add_flag("--discrete", setup.discrete, "Use the Q1 interpolant of the field");
  converge->add_option("--spacing", setup.h, "Mesh spacing for --discrete")->capture_default_str();
  converge->add_option("--particles", setup.particles, "Particle count")->capture_default_str();
  converge->add_option("--out", conv_out, "CSV file (default stdout)");

  auto* defaults = app.add_subcommand("defaults", "Print the resolved configuration of a scenario");
  std::string scenario = "custom";
  defaults->add_option("scenario", scenario, "custom, circular_flow or adaptive_interface");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      RunConfig c = load(config_path, overrides);
      if (run_ranks > 0) c.ranks = run_ranks;
      if (run->count("--seed") > 0) c.seed = seed;
      RunOptions options;
      options.output_dir = out_dir;
      if (!quiet) options.log = &std::cerr;
      const RunResult r = run_simulation(c, options);
      const StepStats& last = r.stats.back();
      std::cout << "generated " << r.generated << ", alive " << last.alive << ", discarded "
                << last.discarded_total << ", dt " << r.dt << ", cells " << r.cells << '\n'
                << "output in " << out_dir << '\n';
    } else if (*bench) {
      const RunConfig c = load(config_path, overrides);
      const auto ranks = parse_int_list(bench_ranks, "--ranks");
      const auto rows = scaling_benchmark(c, ranks, parse_bench_mode(bench_mode), &std::cerr);
      write_csv_file(bench_out, [&](std::ostream& out) { write_bench_csv(out, rows); });
    } else if (*converge) {
      setup.scheme = parse_scheme(scheme);
      setup.dts = parse_double_list(dts, "--dts");
      const auto result = convergence_study(setup);
      write_csv_file(conv_out, [&](std::ostream& out) { write_convergence_csv(out, result); });
    } else if (*defaults) {
      write_config(std::cout, scenario_defaults(scenario));
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const RankFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_config_error(e.cause()) ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
