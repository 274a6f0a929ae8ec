#pragma once

#include "swingfreq/basis.hpp"
#include "swingfreq/controllers.hpp"
#include "swingfreq/dynamics.hpp"
#include "swingfreq/network.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace swingfreq {

/// Transient cost sum_i ( max_t |w_i| + gamma * int_0^T c_i u_i^2 dt ).
struct CostSpec {
  double gamma = 0.1;
  Eigen::VectorXd c;  // per-bus quadratic action-cost coefficients
  double T = 4.0;

  void validate(int n) const;
};

/// c_i ~ U[0.025, 0.075], drawn once per network.
CostSpec make_cost(int n, std::uint64_t seed, double gamma = 0.1, double T = 4.0);

struct Scenario {
  Disturbance disturbance;
  BasisSignal basis;
  enum class Split { Train, Test } split = Split::Train;
};

struct ScenarioSet {
  std::vector<Scenario> scenarios;
  Eigen::VectorXd delta_star;
  std::uint64_t seed = 0;

  SystemState initial_state(const Scenario& s, const Controller& c) const {
    return swingfreq::initial_state(delta_star, c, s.basis);
  }
  std::size_t size() const { return scenarios.size(); }
};

struct ScenarioOptions {
  double noise = 0.0;
  double onset = 0.0;
  // Disturbed buses per scenario are drawn from 1..max_buses.
  int max_buses = 3;
  double magnitude_cap = 1.0;
  Scenario::Split split = Scenario::Split::Train;
};

/// Each scenario picks 1-3 distinct buses with steps ~ U[-1, 1] p.u., a
/// fresh sinusoidal basis and optional per-step noise.
ScenarioSet make_scenarios(const Network& net, const Eigen::VectorXd& delta_star,
                           int count, std::uint64_t seed,
                           ScenarioOptions opts = {});

/// Train and test sets drawn from one master stream (disjoint draws).
std::pair<ScenarioSet, ScenarioSet> make_split(const Network& net,
                                               const Eigen::VectorXd& delta_star,
                                               int train_count, int test_count,
                                               std::uint64_t seed,
                                               ScenarioOptions opts = {});

/// Stable content hash of a scenario (for cross-controller bookkeeping).
std::uint64_t scenario_hash(const Scenario& s);

/// Transient cost over [start, start + T]; the sup uses recorded samples
/// and the integral a left Riemann sum.
double transient_loss(const Trajectory& traj, const CostSpec& cost,
                      double start = 0.0);

/// Mean |w_i| over buses and samples in [onset + 10 s, onset + 15 s].
double restoration_cost(const Trajectory& traj, double onset = 0.0,
                        double window_begin = 10.0, double window_end = 15.0);

/// Maps unconstrained parameters to controller values: droop gains and PWL
/// slopes through softplus, adaptation gains through floor + softplus.
/// Raw layout is [base block | adaptive block], bus-major.
class Parameterization {
 public:
  static Parameterization of(const Controller& prototype);

  int size() const { return base_size_ + adaptive_size_; }
  int base_size() const { return base_size_; }

  Controller build(const Eigen::VectorXd& raw) const;
  Eigen::VectorXd raw_of(const Controller& c) const;
  /// d value / d raw for every coordinate.
  Eigen::VectorXd value_jacobian(const Eigen::VectorXd& raw) const;

 private:
  BaseKind base_ = BaseKind::Droop;
  AdaptiveMode mode_ = AdaptiveMode::None;
  int n_ = 0;
  int segments_ = 0;
  std::vector<double> breakpoints_;
  std::vector<int> a_dims_;
  int base_size_ = 0;
  int adaptive_size_ = 0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossOptions {
  double dt = 0.01;
  bool smooth_max = false;
  double smooth_temperature = 100.0;
};

struct LossGradient {
  double loss = 0.0;
  Eigen::VectorXd grad;  // w.r.t. raw parameters
};

/// Transient loss of an explicit-Euler rollout over [0, cost.T] and its
/// exact reverse-mode gradient. Subgradients: the earliest argmax sample,
/// the left segment at PWL kinks.
LossGradient grad_loss(const Network& net, const Parameterization& param,
                       const Eigen::VectorXd& raw, const Scenario& scenario,
                       const Eigen::VectorXd& delta_star, const CostSpec& cost,
                       const LossOptions& opts = {});

/// Loss only, through the same Euler discretization.
double eval_loss(const Network& net, const Controller& c,
                 const Scenario& scenario, const Eigen::VectorXd& delta_star,
                 const CostSpec& cost, const LossOptions& opts = {});

struct GradCheckEntry {
  int coordinate = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

/// Central finite differences of eval_loss on selected raw coordinates.
std::vector<GradCheckEntry> grad_check(const Network& net,
                                       const Parameterization& param,
                                       const Eigen::VectorXd& raw,
                                       const Scenario& scenario,
                                       const Eigen::VectorXd& delta_star,
                                       const CostSpec& cost,
                                       const std::vector<int>& coords,
                                       double step = 1e-4,
                                       const LossOptions& opts = {});

/// Optimizer state carried by checkpoints so that training resumes exactly.
struct TrainState {
  Eigen::VectorXd raw;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long adam_step = 0;
  int epoch = 0;
};

struct TrainOptions {
  int epochs = 200;
  int batch_size = 10;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  LossOptions loss;
  int threads = 0;  // 0: SWINGFREQ_THREADS or hardware concurrency
  int grad_checks = 0;  // coordinates checked against finite differences
  double divergence_limit = 1e6;
};

struct TrainReport {
  std::vector<double> epoch_loss;  // average batch loss per epoch
  Controller final_controller;
  TrainState state;
  std::vector<GradCheckEntry> grad_check_log;
  bool diverged = false;
  std::string message;
};

/// Adam on raw parameters. Constraint maps keep every iterate inside the
/// controller class. On divergence returns the last good parameters with
/// `diverged` set.
TrainReport train(const Network& net, const Controller& init,
                  const ScenarioSet& scenarios, const CostSpec& cost,
                  const TrainOptions& opts,
                  const std::optional<TrainState>& resume = std::nullopt);

std::string train_report_json(const TrainReport& rep, const TrainOptions& opts,
                              const std::string& controller_type);

std::string dump_checkpoint(const Controller& c, const TrainState& state);
/// Parses a controller or checkpoint file; `state` is filled when the file
/// carries optimizer state.
Controller parse_checkpoint(const std::string& json_text,
                            std::optional<TrainState>* state = nullptr);

/// Worker count: SWINGFREQ_THREADS if set, else hardware concurrency.
int worker_count(int requested = 0);

/// Runs fn(i) for i in [0, count) on up to `threads` workers.
template <typename Fn>
void parallel_for(int count, int threads, Fn&& fn);

}  // namespace swingfreq

#include "swingfreq/detail/parallel.hpp"
