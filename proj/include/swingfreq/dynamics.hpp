#pragma once

#include "swingfreq/basis.hpp"
#include "swingfreq/controllers.hpp"
#include "swingfreq/network.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace swingfreq {

/// Thrown when the state stops being finite.
class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& what, long step)
      : std::runtime_error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

/// Offsets of each bus's estimate block inside the flat a_hat vector.
struct EstimateLayout {
  std::vector<int> offset;  // size n + 1

  static EstimateLayout make(const Controller& c, const BasisSignal& basis);
  int total() const { return offset.empty() ? 0 : offset.back(); }
  int dim(int bus) const { return offset[bus + 1] - offset[bus]; }
};

/// COI angles, frequency deviations and the stacked adaptive estimates.
struct SystemState {
  Eigen::VectorXd delta;
  Eigen::VectorXd omega;
  Eigen::VectorXd a_hat;
  EstimateLayout layout;

  auto a_hat_of(int bus) const {
    return a_hat.segment(layout.offset[bus], layout.dim(bus));
  }
  bool finite() const {
    return delta.allFinite() && omega.allFinite() && a_hat.allFinite();
  }
};

/// (delta_star, 0, 0): the equilibrium with zero estimates.
SystemState initial_state(const Eigen::VectorXd& delta_star,
                          const Controller& c, const BasisSignal& basis);

enum class Integrator { Rk4, Euler };

/// Closed-loop right-hand side over the stacked state x = (delta, omega,
/// a_hat). The disturbance offset and noise are held over a step.
class ClosedLoop {
 public:
  ClosedLoop(const Network& net, const Controller& c, const BasisSignal& basis);

  const EstimateLayout& layout() const { return layout_; }
  int state_size() const { return 2 * n_ + layout_.total(); }

  Eigen::VectorXd pack(const SystemState& s) const;
  SystemState unpack(const Eigen::VectorXd& x) const;

  /// held: per-bus injection offsets (steps + noise) held over the step.
  void rhs(double t, const Eigen::VectorXd& x, const Eigen::VectorXd& held,
           Eigen::VectorXd& dx) const;
  /// Control action per bus at (t, x).
  Eigen::VectorXd control(double t, const Eigen::VectorXd& x) const;
  /// Realized net injection p_i(t) with the held offsets.
  Eigen::VectorXd injection(double t, const Eigen::VectorXd& held) const;

  void advance(double t, double dt, Integrator method,
               const Eigen::VectorXd& held, Eigen::VectorXd& x) const;

 private:
  const Network& net_;
  const Controller& c_;
  const BasisSignal& basis_;
  int n_;
  EstimateLayout layout_;
  mutable Eigen::VectorXd phi_;
  mutable Eigen::VectorXd k1_, k2_, k3_, k4_, tmp_;
};

/// One integrator step from t to t + dt. `noise` (may be empty) is added
/// to the injections for the whole step.
SystemState step(const Network& net, const SystemState& state,
                 const Controller& controller, const BasisSignal& basis,
                 const Disturbance& dist, double t, double dt,
                 Integrator method = Integrator::Rk4,
                 const Eigen::VectorXd& noise = {});

struct Trajectory {
  double dt = 0.0;
  std::vector<double> t;
  Eigen::MatrixXd delta;  // records x n
  Eigen::MatrixXd omega;
  Eigen::MatrixXd u;
  Eigen::MatrixXd p;
  Eigen::MatrixXd a_hat;  // records x total estimate size
  EstimateLayout layout;

  // metadata
  Disturbance disturbance;
  BasisSignal basis;
  std::string controller;
  Integrator method = Integrator::Rk4;

  int records() const { return static_cast<int>(t.size()); }
  int buses() const { return static_cast<int>(omega.cols()); }
  SystemState state(int k) const;
  /// First record index with t >= time (within the onset slack).
  int index_at(double time) const;
};

struct RolloutOptions {
  double horizon = 4.0;
  double dt = 0.01;
  Integrator method = Integrator::Rk4;
};

/// Number of steps for horizon/dt; throws if not integral within rounding.
long step_count(double horizon, double dt);

Trajectory rollout(const Network& net, const Controller& controller,
                   const BasisSignal& basis, const Disturbance& dist,
                   const SystemState& x0, const RolloutOptions& opts);

/// CSV with header t, delta_<i>..., omega_<i>..., u_<i>..., p_<i>...
std::string trajectory_csv(const Trajectory& traj);
std::string trajectory_metadata_json(const Trajectory& traj);
void write_trajectory(const Trajectory& traj,
                      const std::filesystem::path& csv_path);

}  // namespace swingfreq
