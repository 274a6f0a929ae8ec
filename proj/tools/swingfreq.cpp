// Command-line front end: simulate, train, evaluate, certify.
#include "swingfreq/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

void add_common(CLI::App* cmd, swingfreq::RunConfig& cfg) {
  cmd->add_option("--case", cfg.case_path, "case file (JSON)")->required();
  cmd->add_option("--controller", cfg.controller,
                  "controller type (droop, pwl, linear, adaptive-droop, adaptive-pwl, "
                  "integral-droop, integral-pwl) or controller file");
  cmd->add_option("--checkpoint", cfg.checkpoints, "checkpoint file (repeatable)");
  cmd->add_option("--seed", cfg.seed, "scenario seed");
  cmd->add_option("--scenarios", cfg.scenarios, "scenario count");
  cmd->add_option("--dt", cfg.dt, "time step, s");
  cmd->add_option("--horizon", cfg.horizon, "horizon, s");
  cmd->add_option("--noise", cfg.noise, "per-step injection noise bound, p.u.");
  cmd->add_option("--out", cfg.out_dir, "output directory");
  cmd->add_option("--saturate", cfg.saturate, "clamp |u| to this value");
  cmd->add_flag_callback("--euler", [&cfg] { cfg.method = swingfreq::Integrator::Euler; },
                         "explicit Euler integration");
  cmd->add_flag_callback("--rk4", [&cfg] { cfg.method = swingfreq::Integrator::Rk4; },
                         "classical RK4 integration (default)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"swingfreq: adaptive frequency control on swing-equation networks"};
  app.require_subcommand(1);
  swingfreq::RunConfig cfg;

  auto* sim = app.add_subcommand("simulate", "roll out one scenario and write a trajectory");
  add_common(sim, cfg);
  sim->add_option("--step", cfg.steps, "step change bus:magnitude[@onset] (repeatable)");
  sim->add_flag("--no-loads", cfg.no_loads, "no time-varying net load");

  auto* tr = app.add_subcommand("train", "train a controller by BPTT");
  add_common(tr, cfg);
  tr->add_option("--epochs", cfg.epochs, "epochs");
  tr->add_option("--batch", cfg.batch_size, "batch size");
  tr->add_option("--lr", cfg.lr, "Adam step size");
  tr->add_flag("--smooth-max", cfg.smooth_max, "log-sum-exp peak in the loss");

  auto* ev = app.add_subcommand("evaluate", "compare controllers on a seeded test set");
  add_common(ev, cfg);

  auto* ce = app.add_subcommand("certify", "check the energy-function certificate");
  add_common(ce, cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : swingfreq::kExitInput;
  }
  if (sim->parsed()) return swingfreq::cmd_simulate(cfg, std::cout, std::cerr);
  if (tr->parsed()) return swingfreq::cmd_train(cfg, std::cout, std::cerr);
  if (ev->parsed()) return swingfreq::cmd_evaluate(cfg, std::cout, std::cerr);
  return swingfreq::cmd_certify(cfg, std::cout, std::cerr);
}
