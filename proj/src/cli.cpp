#include "swingfreq/cli.hpp"

#include "swingfreq/lyapunov.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <iostream>
#include <numeric>
#include <sstream>

namespace swingfreq {

using Eigen::VectorXd;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Breakpoint grid of the untrained PWL controllers, rad/s.
constexpr int kPwlSegments = 20;
constexpr double kPwlHalfWidth = 0.2;
constexpr double kInitialGain = 1.0;
constexpr double kInitialAdaptation = 10.0;
constexpr int kSinusoidFeatures = 3;

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::invalid_argument("cannot open " + p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct Loaded {
  Network net;
  VectorXd delta_star;
};

Loaded load(const RunConfig& cfg) {
  if (!fs::exists(cfg.case_path))
    throw std::invalid_argument("case file not found: " + cfg.case_path.string());
  Network net = load_case(cfg.case_path);
  VectorXd ds = solve_equilibrium(net).delta_star;
  return {std::move(net), std::move(ds)};
}

StepChange parse_step(const std::string& s, int n) {
  StepChange st;
  const auto colon = s.find(':');
  if (colon == std::string::npos)
    throw std::invalid_argument("step must look like bus:magnitude[@onset], got " + s);
  const auto at = s.find('@', colon);
  try {
    st.bus = std::stoi(s.substr(0, colon)) - 1;
    st.magnitude = std::stod(s.substr(colon + 1, at - colon - 1));
    st.onset = at == std::string::npos ? kEvalOnset : std::stod(s.substr(at + 1));
  } catch (const std::logic_error&) {
    throw std::invalid_argument("cannot parse step " + s);
  }
  if (st.bus < 0 || st.bus >= n)
    throw std::invalid_argument("step bus out of range in " + s);
  return st;
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_error(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

std::string hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const IntegrationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const TrainingError& e) {
    err << "error: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const std::exception& e) {
    // Parse, validation, solver and argument errors are all input problems.
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
}

}  // namespace

void RunConfig::validate() const {
  if (case_path.empty()) throw std::invalid_argument("--case is required");
  if (!fs::exists(case_path))
    throw std::invalid_argument("case file not found: " + case_path.string());
  for (const auto& c : checkpoints)
    if (!fs::exists(c)) throw std::invalid_argument("checkpoint not found: " + c.string());
  if (dt < 0.0) throw std::invalid_argument("dt must be positive");
  if (horizon < 0.0) throw std::invalid_argument("horizon must be positive");
  if (noise < 0.0) throw std::invalid_argument("noise must be nonnegative");
  if (scenarios < 0) throw std::invalid_argument("scenario count must be positive");
  if (epochs < 0) throw std::invalid_argument("epoch count must be nonnegative");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (saturate && !(*saturate > 0.0)) throw std::invalid_argument("saturation must be > 0");
}

Controller default_controller(const std::string& type, int n) {
  auto droop = [&] { return Controller::droop({VectorXd::Constant(n, kInitialGain)}); };
  auto pwl = [&] {
    MonotonePwlParams p;
    p.breakpoints = MonotonePwlParams::uniform_grid(kPwlSegments, kPwlHalfWidth);
    p.slopes = Eigen::MatrixXd::Constant(n, p.segments(), kInitialGain);
    return Controller::pwl(std::move(p));
  };
  auto adapt = [&](int dim) {
    AdaptiveParams a;
    a.diag.assign(n, VectorXd::Constant(dim, kInitialAdaptation));
    return a;
  };
  if (type == "droop") return droop();
  if (type == "pwl") return pwl();
  if (type == "linear") return Controller::linear(VectorXd::Constant(n, kInitialGain));
  if (type == "adaptive-droop")
    return droop().with_adaptation(adapt(kSinusoidFeatures), AdaptiveMode::Full);
  if (type == "adaptive-pwl")
    return pwl().with_adaptation(adapt(kSinusoidFeatures), AdaptiveMode::Full);
  if (type == "integral-droop")
    return droop().with_adaptation(adapt(1), AdaptiveMode::Integral);
  if (type == "integral-pwl")
    return pwl().with_adaptation(adapt(1), AdaptiveMode::Integral);
  throw std::invalid_argument("unknown controller type '" + type + "'");
}

Controller resolve_controller(const std::string& spec, int n,
                              std::optional<TrainState>* state) {
  if (state) state->reset();
  if (spec.empty()) throw std::invalid_argument("no controller given");
  if (!fs::exists(spec)) return default_controller(spec, n);
  Controller c = parse_checkpoint(read_file(spec), state);
  if (c.size() != n)
    throw std::invalid_argument("controller in " + spec + " is sized for " +
                                std::to_string(c.size()) + " buses, case has " +
                                std::to_string(n));
  return c;
}

ScenarioSet evaluation_scenarios(const Network& net, const VectorXd& delta_star,
                                 int count, std::uint64_t seed, double noise) {
  ScenarioOptions o;
  o.noise = noise;
  o.onset = kEvalOnset;
  o.split = Scenario::Split::Test;
  // Separate stream from training draws under the same --seed.
  return make_scenarios(net, delta_star, count, seed ^ 0x7e57u, o);
}

ScenarioSet training_scenarios(const Network& net, const VectorXd& delta_star,
                               int count, std::uint64_t seed, double noise) {
  ScenarioOptions o;
  o.noise = noise;
  return make_scenarios(net, delta_star, count, seed, o);
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    cfg.validate();
    const Loaded l = load(cfg);
    const int n = l.net.size();
    const std::string spec = !cfg.checkpoints.empty() ? cfg.checkpoints.front().string()
                             : cfg.controller.empty()   ? "droop"
                                                        : cfg.controller;
    Controller c = resolve_controller(spec, n);
    if (cfg.saturate) c = c.with_saturation(*cfg.saturate);

    Scenario s;
    if (!cfg.steps.empty() || cfg.no_loads) {
      for (const auto& txt : cfg.steps) s.disturbance.steps.push_back(parse_step(txt, n));
      s.basis = cfg.no_loads ? BasisSignal::none(n) : make_sinusoid_basis(n, cfg.seed);
      s.disturbance.noise = cfg.noise;
      s.disturbance.seed = cfg.seed;
    } else {
      s = evaluation_scenarios(l.net, l.delta_star, 1, cfg.seed, cfg.noise).scenarios[0];
    }
    if (c.adaptive_mode() == AdaptiveMode::Full && !cfg.no_loads) {
      for (int i = 0; i < n; ++i)
        if (c.adaptive_dim(i, s.basis) != static_cast<int>(c.adaptive_params().diag[i].size()))
          throw std::invalid_argument("controller gains do not match the basis dimension");
    }
    RolloutOptions ro;
    ro.dt = cfg.dt > 0.0 ? cfg.dt : 0.01;
    ro.horizon = cfg.horizon > 0.0 ? cfg.horizon : kEvalHorizon;
    ro.method = cfg.method.value_or(Integrator::Rk4);
    const Trajectory traj =
        rollout(l.net, c, s.basis, s.disturbance, initial_state(l.delta_star, c, s.basis), ro);

    fs::create_directories(cfg.out_dir);
    const fs::path csv = cfg.out_dir / "trajectory.csv";
    write_trajectory(traj, csv);

    double onset = 0.0;
    if (!s.disturbance.steps.empty()) {
      onset = s.disturbance.steps.front().onset;
      for (const auto& st : s.disturbance.steps) onset = std::min(onset, st.onset);
    }
    const CostSpec cost = make_cost(n, kCostSeed);
    out << "trajectory: " << csv.string() << " (" << traj.records() << " rows)\n";
    out << "nadir: " << fmt(traj.omega.cwiseAbs().maxCoeff()) << " rad/s\n";
    std::string restoration = "n/a (horizon too short)";
    std::string transient = restoration;
    try {
      restoration = fmt(restoration_cost(traj, onset));
    } catch (const std::invalid_argument&) {
    }
    try {
      transient = fmt(transient_loss(traj, cost, onset));
    } catch (const std::invalid_argument&) {
    }
    out << "restoration cost: " << restoration << '\n';
    out << "transient cost: " << transient << '\n';
    return static_cast<int>(kExitOk);
  });
}

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    cfg.validate();
    const Loaded l = load(cfg);
    const int n = l.net.size();
    std::optional<TrainState> resume;
    Controller init;
    std::string type = cfg.controller;
    if (!cfg.checkpoints.empty()) {
      init = resolve_controller(cfg.checkpoints.front().string(), n, &resume);
      type = init.type_name();
    } else {
      init = resolve_controller(cfg.controller.empty() ? "droop" : cfg.controller, n);
      type = init.type_name();
    }
    if (init.base_kind() == BaseKind::Linear)
      throw std::invalid_argument("linear test controllers are not trainable");

    const ScenarioSet set =
        training_scenarios(l.net, l.delta_star, cfg.scenarios > 0 ? cfg.scenarios : 50,
                           cfg.seed, cfg.noise);
    const CostSpec cost = make_cost(n, kCostSeed);
    TrainOptions to;
    to.epochs = cfg.epochs;
    to.batch_size = cfg.batch_size;
    to.lr = cfg.lr > 0.0 ? cfg.lr : kTrainLearningRate;
    to.seed = cfg.seed;
    to.loss.dt = cfg.dt > 0.0 ? cfg.dt : 0.01;
    to.loss.smooth_max = cfg.smooth_max;
    const TrainReport rep = train(l.net, init, set, cost, to, resume);

    fs::create_directories(cfg.out_dir);
    write_file(cfg.out_dir / "checkpoint.json", dump_checkpoint(rep.final_controller, rep.state) + "\n");
    write_file(cfg.out_dir / "train_report.json", train_report_json(rep, to, type) + "\n");
    if (!rep.epoch_loss.empty())
      out << type << ": loss " << fmt(rep.epoch_loss.front()) << " -> "
          << fmt(rep.epoch_loss.back()) << " over " << rep.epoch_loss.size() << " epochs\n";
    if (rep.diverged) {
      err << "training diverged: " << rep.message
          << " (last good parameters written to checkpoint.json)\n";
      return static_cast<int>(kExitDiverged);
    }
    return static_cast<int>(kExitOk);
  });
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    cfg.validate();
    if (cfg.checkpoints.empty() && cfg.controller.empty())
      throw std::invalid_argument("evaluate needs at least one --checkpoint");
    const Loaded l = load(cfg);
    const int n = l.net.size();

    std::vector<std::pair<std::string, Controller>> controllers;
    for (const auto& p : cfg.checkpoints) {
      // out/<name>/checkpoint.json is what train writes; name rows after the directory.
      std::string name = p.stem().string();
      if (name == "checkpoint" && p.has_parent_path())
        name = fs::absolute(p).parent_path().filename().string();
      controllers.emplace_back(name, resolve_controller(p.string(), n));
    }
    if (!cfg.controller.empty())
      controllers.emplace_back(cfg.controller, resolve_controller(cfg.controller, n));
    if (cfg.saturate)
      for (auto& [name, c] : controllers) c = c.with_saturation(*cfg.saturate);

    const ScenarioSet set = evaluation_scenarios(
        l.net, l.delta_star, cfg.scenarios > 0 ? cfg.scenarios : 50, cfg.seed, cfg.noise);
    const CostSpec cost = make_cost(n, kCostSeed);
    RolloutOptions ro;
    ro.dt = cfg.dt > 0.0 ? cfg.dt : 0.01;
    ro.horizon = cfg.horizon > 0.0 ? cfg.horizon : kEvalHorizon;
    ro.method = cfg.method.value_or(Integrator::Rk4);

    std::uint64_t set_hash = 1469598103934665603ull;
    std::vector<std::uint64_t> hashes;
    for (const auto& s : set.scenarios) {
      hashes.push_back(scenario_hash(s));
      set_hash = (set_hash ^ hashes.back()) * 1099511628211ull;
    }

    const int count = static_cast<int>(set.size());
    const int threads = worker_count();
    std::string rows = "controller,scenario,scenario_hash,transient_cost,restoration_cost\n";
    std::string table =
        "controller,type,scenarios,mean_transient,se_transient,mean_restoration,se_restoration,scenario_hash\n";
    json jt = json::array();
    for (const auto& [name, c] : controllers) {
      std::vector<double> transient(count), restoration(count);
      std::vector<std::string> errors(count);
      parallel_for(count, threads, [&](int k) {
        try {
          const Scenario& s = set.scenarios[k];
          const Trajectory traj = rollout(l.net, c, s.basis, s.disturbance,
                                          set.initial_state(s, c), ro);
          transient[k] = transient_loss(traj, cost, kEvalOnset);
          restoration[k] = restoration_cost(traj, kEvalOnset);
        } catch (const std::exception& e) {
          errors[k] = e.what();
        }
      });
      for (int k = 0; k < count; ++k) {
        if (!errors[k].empty())
          throw IntegrationError(name + ", scenario " + std::to_string(k) + ": " + errors[k], 0);
        rows += name + "," + std::to_string(k) + "," + hex(hashes[k]) + "," +
                fmt(transient[k]) + "," + fmt(restoration[k]) + "\n";
      }
      table += name + "," + c.type_name() + "," + std::to_string(count) + "," +
               fmt(mean(transient)) + "," + fmt(std_error(transient)) + "," +
               fmt(mean(restoration)) + "," + fmt(std_error(restoration)) + "," +
               hex(set_hash) + "\n";
      jt.push_back({{"controller", name},
                    {"type", c.type_name()},
                    {"scenarios", count},
                    {"mean_transient", mean(transient)},
                    {"se_transient", std_error(transient)},
                    {"mean_restoration", mean(restoration)},
                    {"se_restoration", std_error(restoration)},
                    {"scenario_hash", hex(set_hash)}});
      out << name << ": transient " << fmt(mean(transient)) << ", restoration "
          << fmt(mean(restoration)) << '\n';
    }
    fs::create_directories(cfg.out_dir);
    write_file(cfg.out_dir / "table.csv", table);
    write_file(cfg.out_dir / "scenarios.csv", rows);
    write_file(cfg.out_dir / "table.json", json{{"seed", cfg.seed}, {"rows", jt}}.dump(2) + "\n");
    return static_cast<int>(kExitOk);
  });
}

int cmd_certify(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    cfg.validate();
    const Loaded l = load(cfg);
    const int n = l.net.size();
    const std::string spec =
        !cfg.checkpoints.empty() ? cfg.checkpoints.front().string() : cfg.controller;
    Controller c = resolve_controller(spec, n);
    if (cfg.saturate) c = c.with_saturation(*cfg.saturate);
    std::string reason;
    const bool in_class = c.in_certified_class(&reason);
    if (c.saturation()) {
      err << "refusing to certify: " << reason << '\n';
      return static_cast<int>(kExitCertify);
    }
    // Other class violations (negative linear feedback) still get the
    // numerical check so the report shows where the decrease breaks.
    if (!in_class) err << "warning: " << reason << '\n';
    const AdaptiveParams gains = c.is_adaptive() ? c.adaptive_params() : AdaptiveParams{};
    const GammaBounds g = compute_gammas(l.net, gains, l.delta_star);
    const RoaEstimate roa = estimate_roa(l.net, g, l.delta_star);

    ScenarioOptions so;
    const int count = cfg.scenarios > 0 ? cfg.scenarios : 10;
    ScenarioSet set = make_scenarios(l.net, l.delta_star, count, cfg.seed, so);
    RolloutOptions ro;
    ro.dt = cfg.dt > 0.0 ? cfg.dt : 0.005;
    ro.horizon = cfg.horizon > 0.0 ? cfg.horizon : 15.0;
    ro.method = cfg.method.value_or(Integrator::Rk4);

    DecreaseReport worst;
    worst.worst_margin = -std::numeric_limits<double>::infinity();
    worst.worst_excess = -std::numeric_limits<double>::infinity();
    int worst_scenario = -1;
    for (int k = 0; k < count; ++k) {
      Scenario& s = set.scenarios[k];
      // The integral law only sees the constant feature; certify it against
      // constant loads.
      if (c.adaptive_mode() == AdaptiveMode::Integral) {
        VectorXd a(n);
        for (int i = 0; i < n; ++i)
          a[i] = s.basis.coefficients(i)[s.basis.constant_index(i)];
        s.basis = BasisSignal::constant(a);
      }
      const Trajectory traj =
          rollout(l.net, c, s.basis, s.disturbance, set.initial_state(s, c), ro);
      const DecreaseReport d = check_decrease(traj, l.net, gains, l.delta_star);
      worst.violations += d.violations;
      worst.checked += d.checked;
      worst.tolerance_constant = std::max(worst.tolerance_constant, d.tolerance_constant);
      if (d.worst_excess > worst.worst_excess) {
        worst.worst_margin = d.worst_margin;
        worst.worst_time = d.worst_time;
        worst.worst_index = d.worst_index;
        worst.worst_excess = d.worst_excess;
        worst_scenario = k;
      }
    }
    worst.pass = worst.violations == 0;
    const bool pass = worst.pass && roa.valid && in_class;
    fs::create_directories(cfg.out_dir);
    json cert = json::parse(certificate_json(g, worst, roa, pass));
    cert["controller"] = c.type_name();
    cert["scenarios"] = count;
    cert["dt"] = ro.dt;
    cert["worst_scenario"] = worst_scenario;
    cert["worst_index"] = worst.worst_index;
    if (!in_class) cert["class_violation"] = reason;
    write_file(cfg.out_dir / "certificate.json", cert.dump(2) + "\n");
    out << "certificate: " << (pass ? "pass" : "fail") << " (worst margin "
        << fmt(worst.worst_margin) << " at t = " << fmt(worst.worst_time)
        << " s, index " << worst.worst_index << ", scenario " << worst_scenario
        << "; " << worst.violations << " violations)\n";
    return static_cast<int>(pass ? kExitOk : kExitCertify);
  });
}

}  // namespace swingfreq
