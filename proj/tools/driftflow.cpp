#include <CLI11.hpp>

#include "driftflow/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"coupled population/classifier gradient-flow simulator"};
  app.require_subcommand(1);

  std::string cfg, cfg_b, out_dir;
  int stride = 0;

  CLI::App* run = app.add_subcommand("run", "integrate a scenario and write its outputs");
  run->add_option("config", cfg, "scenario config file")->required();
  run->add_option("--out", out_dir, "output directory (overrides output.dir)");
  run->add_option("--stride", stride, "sample stride override")->check(CLI::PositiveNumber);

  CLI::App* check = app.add_subcommand("check", "audit a scenario against the convergence theory");
  check->add_option("config", cfg, "scenario config file")->required();
  check->add_option("--out", out_dir, "output directory (overrides output.dir)");

  CLI::App* compare = app.add_subcommand("compare", "run two scenarios and compare their losses");
  compare->add_option("config_a", cfg, "first scenario config")->required();
  compare->add_option("config_b", cfg_b, "second scenario config")->required();
  compare->add_option("--out", out_dir, "output directory (overrides the first config's)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : driftflow::kConfigError;
  }

  if (run->parsed()) return driftflow::cmd_run(cfg, out_dir, stride);
  if (check->parsed()) return driftflow::cmd_check(cfg, out_dir);
  return driftflow::cmd_compare(cfg, cfg_b, out_dir);
}
