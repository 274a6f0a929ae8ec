#pragma once

#include "swingfreq/controllers.hpp"
#include "swingfreq/dynamics.hpp"
#include "swingfreq/network.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

// Simulation-side instrumentation for the energy function
//   V = 1/2 sum M_i w_i^2 + Wp(delta) + 1/2 sum (a_hat_i - a_i)^T A_i^-1 (a_hat_i - a_i).
// Everything here needs the true load coefficients a_i, which controllers
// never see.
namespace swingfreq {

struct LyapunovEval {
  double V = 0.0;
  double Wp = 0.0;
  double kinetic = 0.0;
  double est_err = 0.0;
};

/// Bound constants for gamma1 |x|^2 <= V <= gamma2 |x|^2 with
/// x = (delta - delta_star, omega, a_hat - a).
struct GammaBounds {
  double gamma1 = 0.0;
  double gamma2 = 0.0;
  double beta1 = 0.0;  // Wp >= beta1 |delta - delta_star|^2
  double beta2 = 0.0;  // Wp <= beta2 |delta - delta_star|^2
  double max_angle = 0.0;
  int samples = 0;
};

/// Potential term in cosine form.
double eval_Wp(const Network& net, const Eigen::VectorXd& delta,
               const Eigen::VectorXd& delta_star);
/// Same quantity as the Bregman distance S(d) - S(d*) - grad_S(d*)^T (d - d*).
double eval_Wp_bregman(const Network& net, const Eigen::VectorXd& delta,
                       const Eigen::VectorXd& delta_star);

/// True coefficients per bus: the basis coefficients with active step
/// changes folded into the constant feature.
std::vector<Eigen::VectorXd> effective_coefficients(const BasisSignal& basis,
                                                    const Disturbance& dist,
                                                    double t);

LyapunovEval eval_V(const Network& net, const SystemState& state,
                    const std::vector<Eigen::VectorXd>& true_coefficients,
                    const AdaptiveParams& gains,
                    const Eigen::VectorXd& delta_star);
LyapunovEval eval_V(const Network& net, const SystemState& state,
                    const BasisSignal& basis, const AdaptiveParams& gains,
                    const Eigen::VectorXd& delta_star);

/// Squared norm of (delta - delta_star, omega, a_hat - a).
double deviation_norm2(const SystemState& state,
                       const std::vector<Eigen::VectorXd>& true_coefficients,
                       const Eigen::VectorXd& delta_star);

struct GammaOptions {
  // Region: every edge difference at most max_angle.
  double max_angle = std::numbers::pi / 2 - 0.01;
  int samples = 10000;
  std::uint64_t seed = 1;
};

/// beta1/beta2 from eigenvalues of 1/2 hess S on the COI subspace, over
/// Latin-hypercube samples of the region and its weight-extreme corners.
/// Throws SolverError if beta1 <= 0.
GammaBounds compute_gammas(const Network& net, const AdaptiveParams& gains,
                           const Eigen::VectorXd& delta_star,
                           GammaOptions opts = {});

/// Smallest and largest eigenvalue of hess S restricted to 1-perp.
std::pair<double, double> coi_eigen_range(const Eigen::MatrixXd& hessian);

struct DecreaseReport {
  double worst_margin = 0.0;  // max over samples of dV/dt + sum D w^2
  double worst_time = 0.0;
  int worst_index = 0;
  double worst_excess = 0.0;  // max of margin - tolerance
  double tolerance_constant = 0.0;  // c in tol = c dt^2
  int violations = 0;
  int checked = 0;
  bool pass = true;
};

/// Central differences of V along the trajectory (one-sided second order
/// at segment ends), checked against dV/dt <= -sum D_i w_i^2 + c dt^2.
/// The trajectory must be noise free and use the full adaptive mode (or no
/// adaptation).
DecreaseReport check_decrease(const Trajectory& traj, const Network& net,
                              const AdaptiveParams& gains,
                              const Eigen::VectorXd& delta_star);

struct RoaEstimate {
  double r = 0.0;
  double rho = 0.0;
  bool valid = false;
  double gamma2 = 0.0;

  /// x in Q_rho: |x| < r and W2(x) = gamma2 |x|^2 <= rho.
  bool contains(double norm2) const {
    return valid && norm2 < r * r && gamma2 * norm2 <= rho;
  }
};

/// Largest Euclidean ball around the equilibrium inside the angle region
/// and the level rho = gamma1 r^2 (1 - margin_frac).
RoaEstimate estimate_roa(const Network& net, const GammaBounds& gammas,
                         const Eigen::VectorXd& delta_star,
                         double margin_frac = 0.01);

std::string certificate_json(const GammaBounds& g, const DecreaseReport& d,
                             const RoaEstimate& roa, bool pass);

}  // namespace swingfreq
