// Command-line front end: run, sweep, gradcheck.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "momental/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitIo = 2;
constexpr int kExitCheckFailed = 3;

std::filesystem::path resolve_out(const std::string &flag,
                                  const momental::ExperimentSpec &spec) {
  if (!flag.empty())
    return flag;
  if (spec.out_dir)
    return *spec.out_dir;
  if (const char *env = std::getenv("MOMENTAL_OUT"); env && *env)
    return env;
  return "momental_out";
}

std::vector<double> parse_values(const std::string &text) {
  std::vector<double> out;
  for (auto item : momental::detail::split_list(text))
    out.push_back(momental::detail::parse_real("values", item));
  return out;
}

int cmd_run(const std::string &config, const std::string &out,
            unsigned parallel) {
  const auto spec = momental::load_experiment(config);
  const auto dir = resolve_out(out, spec);
  const auto records = momental::run_experiment(spec, parallel);
  momental::write_experiment(spec, records, dir);
  for (const auto &rec : records)
    std::cout << "seed " << rec.config.seed
              << ": final_loss=" << momental::format_double(rec.terminal.final_loss)
              << " steps=" << rec.terminal.steps_run
              << (rec.terminal.diverged ? " (diverged)" : "") << '\n';
  std::cout << "wrote " << dir.string() << '\n';
  return kExitOk;
}

int cmd_sweep(const std::string &config, const std::string &axis_name,
              const std::string &values_text, const std::string &out,
              unsigned parallel) {
  const auto axis = momental::parse_axis(axis_name);
  if (!axis)
    throw momental::ConfigError("unknown sweep axis '" + axis_name +
                                "' (expected alpha or beta3)");
  const auto values = parse_values(values_text);
  const auto spec = momental::load_experiment(config);
  const auto dir = resolve_out(out, spec);
  const auto result = momental::run_sweep(spec, *axis, values, parallel);
  momental::write_sweep(spec, result, dir);
  for (const auto &row : result.rows())
    std::cout << row.metric_name << ": median="
              << momental::format_double(row.median)
              << " mean=" << momental::format_double(row.mean)
              << " std=" << momental::format_double(row.std) << '\n';
  std::cout << "spread=" << momental::format_double(result.spread) << '\n'
            << "wrote " << dir.string() << '\n';
  return kExitOk;
}

int cmd_gradcheck(const std::string &name, unsigned points) {
  constexpr double kStep = 1e-5;
  constexpr double kTolerance = 1e-5;
  const auto problem = momental::ProblemSpec::defaults(name).build(1);
  double worst = 0.0;
  for (unsigned k = 0; k < points; ++k) {
    const auto x = problem->probe_point(1000 + k);
    const auto analytic = problem->gradient(x, k);
    const auto numeric = momental::finite_diff_grad(*problem, x, k, kStep);
    const double err = momental::gradient_relative_error(analytic, numeric);
    worst = std::max(worst, err);
    std::cout << name << " point " << k
              << ": rel_err=" << momental::format_double(err) << '\n';
  }
  const bool ok = worst < kTolerance;
  std::cout << name << ": max rel_err=" << momental::format_double(worst)
            << (ok ? " PASS" : " FAIL") << '\n';
  return ok ? kExitOk : kExitCheckFailed;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"momental: AdaMod, Adam and SGDM experiment runner"};
  app.require_subcommand(1);

  std::string config, out, axis, values, problem;
  unsigned parallel = 1;
  unsigned points = 20;

  auto *run = app.add_subcommand("run", "Run one experiment config");
  run->add_option("--config", config, "Config file")->required();
  run->add_option("--out", out, "Output directory (default: $MOMENTAL_OUT)");
  run->add_option("--parallel", parallel, "Seeds to run concurrently")
      ->check(CLI::PositiveNumber);

  auto *sweep = app.add_subcommand("sweep", "Sweep alpha or beta3");
  sweep->add_option("--config", config, "Base config file")->required();
  sweep->add_option("--axis", axis, "alpha or beta3")->required();
  sweep->add_option("--values", values, "Comma-separated values")->required();
  sweep->add_option("--out", out, "Output directory (default: $MOMENTAL_OUT)");
  sweep->add_option("--parallel", parallel, "Seeds to run concurrently")
      ->check(CLI::PositiveNumber);

  auto *grad = app.add_subcommand(
      "gradcheck", "Compare analytic and finite-difference gradients");
  grad->add_option("--problem", problem,
                   "quadratic, rosenbrock, logreg or mlp")
      ->required();
  grad->add_option("--points", points, "Number of probe points")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*run)
      return cmd_run(config, out, parallel);
    if (*sweep)
      return cmd_sweep(config, axis, values, out, parallel);
    return cmd_gradcheck(problem, points);
  } catch (const momental::IoError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const momental::Error &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}
