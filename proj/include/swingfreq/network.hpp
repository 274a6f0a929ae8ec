#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace swingfreq {

/// Raised when a case file cannot be read or parsed.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when network data violates a model invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by numerical routines that fail to converge or leave the
/// operating region they were asked to stay in.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Line {
  int from = 0;  // zero-based bus index
  int to = 0;
  double susceptance = 0.0;  // p.u.
};

/// Lossless network with unit voltage magnitudes. Immutable once built; the
/// constructor enforces every structural invariant and throws
/// ValidationError otherwise.
class Network {
 public:
  static constexpr double kBalanceTolerance = 1e-9;

  Network(Eigen::VectorXd inertia, Eigen::VectorXd damping,
          Eigen::VectorXd p_star, std::vector<Line> lines,
          std::vector<int> bus_ids = {});

  int size() const { return static_cast<int>(inertia_.size()); }
  const std::vector<Line>& lines() const { return lines_; }
  const Eigen::VectorXd& inertia() const { return inertia_; }
  const Eigen::VectorXd& damping() const { return damping_; }
  const Eigen::VectorXd& p_star() const { return p_star_; }
  const Eigen::MatrixXd& susceptance() const { return susceptance_; }
  const std::vector<int>& bus_ids() const { return bus_ids_; }

  /// Copy of this network with different setpoints (re-validated).
  Network with_setpoints(Eigen::VectorXd p_star) const;

 private:
  Eigen::VectorXd inertia_;
  Eigen::VectorXd damping_;
  Eigen::VectorXd p_star_;
  std::vector<Line> lines_;
  std::vector<int> bus_ids_;
  Eigen::MatrixXd susceptance_;
};

struct LoadOptions {
  // Subtract the mean from p_star instead of rejecting unbalanced setpoints.
  bool rebalance = false;
};

/// Reads a JSON case file {version, buses:[{id,M,D,p_star}],
/// lines:[{from,to,B}]}.
Network load_case(const std::filesystem::path& path, LoadOptions opts = {});
Network parse_case(const std::string& json_text, LoadOptions opts = {});
std::string dump_case(const Network& net);

/// S(delta) = -1/2 sum_ij B_ij cos(delta_i - delta_j).
double potential_S(const Network& net, const Eigen::VectorXd& delta);
Eigen::VectorXd grad_S(const Network& net, const Eigen::VectorXd& delta);
Eigen::MatrixXd hessian_S(const Network& net, const Eigen::VectorXd& delta);
/// Hessian-vector product without forming the matrix.
Eigen::VectorXd hessian_S_times(const Network& net, const Eigen::VectorXd& delta,
                                const Eigen::VectorXd& v);

/// Largest |delta_i - delta_j| over the lines.
double max_edge_difference(const Network& net, const Eigen::VectorXd& delta);

struct EquilibriumAngles {
  Eigen::VectorXd delta_star;
  double residual = 0.0;  // infinity norm of p_star - grad_S(delta_star)
  int iterations = 0;
};

struct EquilibriumOptions {
  int max_iterations = 50;
  double tolerance = 1e-11;
};

/// Damped Newton on grad_S(delta) = p_star with the COI gauge sum(delta) = 0.
EquilibriumAngles solve_equilibrium(const Network& net,
                                    EquilibriumOptions opts = {});
EquilibriumAngles solve_equilibrium(const Network& net,
                                    const Eigen::VectorXd& initial_guess,
                                    EquilibriumOptions opts = {});

/// Removes the mean so that sum(delta) = 0.
inline Eigen::VectorXd project_coi(const Eigen::VectorXd& delta) {
  return delta.array() - delta.mean();
}

}  // namespace swingfreq
