// Command-line driver: run, variance-study, cost-curve, dump-gradient.
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "mlqmc/errors.hpp"
#include "mlqmc/experiment.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfigError = 2, kRunError = 3 };

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string preset;
};

mlqmc::RunConfig make_config(const Options& o) {
  mlqmc::RunConfig c = o.config.empty() ? mlqmc::preset_config(o.preset.empty() ? "problem1" : o.preset)
                                        : mlqmc::load_config(o.config);
  if (!o.config.empty() && !o.preset.empty()) {
    // --preset on top of a file swaps only the covariance parameters
    const auto p = mlqmc::preset_config(o.preset);
    c.preset = p.preset;
    c.matern = p.matern;
  }
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = *o.threads;
  mlqmc::validate(c);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multilevel quasi-Monte Carlo gradients for a lognormal elliptic control problem"};
  app.require_subcommand(1);
  Options o;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory (overrides MLQMC_OUTPUT_DIR and the config)");
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--preset", o.preset, "built-in problem")->check(CLI::IsMember({"problem1", "problem2"}));
  };
  auto* run = app.add_subcommand("run", "estimate gradients for every configured method and tolerance");
  auto* vs = app.add_subcommand("variance-study", "R*V_l against N for every level");
  auto* cc = app.add_subcommand("cost-curve", "cost against tolerance for MC, QMC, MLMC and MLQMC");
  auto* dg = app.add_subcommand("dump-gradient", "gradient, target and control fields on the finest mesh");
  for (auto* sub : {run, vs, cc, dg}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  mlqmc::RunConfig config;
  std::filesystem::path out;
  try {
    config = make_config(o);
    out = mlqmc::resolve_output_dir(config, o.out.empty() ? std::nullopt : std::optional<std::filesystem::path>(o.out));
  } catch (const mlqmc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    if (run->parsed()) {
      const auto res = mlqmc::run_experiment(config, out);
      for (const auto& rec : res.records) {
        std::cout << rec["method"].get<std::string>() << " eps=" << rec["eps"].get<double>()
                  << " rmse=" << rec["rmse_quadrature"].get<double>()
                  << " cost=" << rec["timing"]["normalized_cost"].get<double>() << '\n';
      }
    } else if (vs->parsed()) {
      const auto study = mlqmc::variance_study(config, out);
      for (std::size_t l = 0; l < study.slopes.size(); ++l) {
        std::cout << "level " << l << " slope " << study.slopes[l] << '\n';
      }
    } else if (cc->parsed()) {
      const auto curve = mlqmc::cost_curve(config, out);
      for (const auto& [m, e] : curve.exponents) std::cout << mlqmc::method_name(m) << " exponent " << e << '\n';
    } else if (dg->parsed()) {
      mlqmc::dump_gradient(config, out);
    }
    std::cout << "output: " << out.string() << '\n';
  } catch (const mlqmc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const mlqmc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRunError;
  } catch (const std::exception& e) {
    std::cerr << "fatal: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}
