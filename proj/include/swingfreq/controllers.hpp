#pragma once

#include "swingfreq/basis.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace swingfreq {

inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}
inline double softplus_grad(double x) { return 1.0 / (1.0 + std::exp(-x)); }
/// Inverse of softplus for y > 0.
inline double softplus_inverse(double y) {
  return y > 30.0 ? y : std::log(std::expm1(y));
}

/// Linear droop u_i = phi_i * omega_i.
struct DroopParams {
  Eigen::VectorXd gain;  // p.u. / (rad/s), strictly positive
};

/// Monotone piecewise-linear base controller anchored at the origin.
/// Segments are (-inf, b_1], [b_1, b_2], ..., [b_m, inf) sharing one
/// breakpoint grid across buses; slopes(i, k) is the slope of segment k at
/// bus i. u_i(w) integrates the slope from 0 to w.
struct MonotonePwlParams {
  std::vector<double> breakpoints;
  Eigen::MatrixXd slopes;  // n x (m + 1), nonnegative

  int segments() const { return static_cast<int>(breakpoints.size()) + 1; }
  /// Segment containing w; a w on a breakpoint belongs to the left segment.
  int segment_of(double w) const;
  /// d u / d slope_k at w: signed overlap of segment k with [0, w].
  double overlap(int k, double w) const;

  /// Default grid: `segments` equal pieces over [-1, 1] rad/s.
  static std::vector<double> uniform_grid(int segments = 20,
                                          double half_width = 1.0);
};

/// Diagonal adaptation gains A_i; entries >= kFloor.
struct AdaptiveParams {
  static constexpr double kFloor = 1e-4;
  std::vector<Eigen::VectorXd> diag;  // per bus, length l_i
};

enum class BaseKind {
  Droop,
  MonotonePwl,
  // Linear feedback of either sign. Exists for negative controls in the
  // certification path; a negative gain is outside the monotone class.
  Linear,
};

enum class AdaptiveMode {
  None,
  // Uses the full feature vector of the basis signal.
  Full,
  // Uses only the constant feature, i.e. integral action.
  Integral,
};

double droop_u(const DroopParams& params, int bus, double omega);
double pwl_u(const MonotonePwlParams& params, int bus, double omega);
double adaptive_u(double base_u, const Eigen::VectorXd& phi,
                  const Eigen::VectorXd& a_hat);
Eigen::VectorXd adaptation_rhs(const AdaptiveParams& params, int bus,
                               double omega, const Eigen::VectorXd& phi);

/// Static local feedback u_i = base_i(w_i) + phi_i^T a_hat_i with the
/// estimate a_hat carried in the simulation state. Immutable and pure.
class Controller {
 public:
  static Controller droop(DroopParams p);
  static Controller pwl(MonotonePwlParams p);
  static Controller linear(Eigen::VectorXd gain);

  Controller with_adaptation(AdaptiveParams p, AdaptiveMode mode) const;
  Controller with_saturation(double u_max) const;

  int size() const { return n_; }
  BaseKind base_kind() const { return kind_; }
  AdaptiveMode adaptive_mode() const { return mode_; }
  bool is_adaptive() const { return mode_ != AdaptiveMode::None; }
  const std::optional<double>& saturation() const { return saturation_; }

  const DroopParams& droop_params() const { return droop_; }
  const MonotonePwlParams& pwl_params() const { return pwl_; }
  const Eigen::VectorXd& linear_gain() const { return droop_.gain; }
  const AdaptiveParams& adaptive_params() const { return adaptive_; }

  double base_u(int bus, double omega) const;
  /// d base_u / d omega, left derivative at kinks.
  double base_du(int bus, double omega) const;

  /// Length of the estimate vector at a bus under the given basis.
  int adaptive_dim(int bus, const BasisSignal& basis) const;
  /// Features the adaptive law sees at bus i; empty when not adaptive.
  void features_into(int bus, const BasisSignal& basis, double t,
                     Eigen::Ref<Eigen::VectorXd> out) const;
  Eigen::VectorXd features(int bus, const BasisSignal& basis, double t) const;

  /// Total action, including saturation when enabled.
  double u(int bus, double omega, const Eigen::Ref<const Eigen::VectorXd>& phi,
           const Eigen::Ref<const Eigen::VectorXd>& a_hat) const;

  /// Whether every base controller is nondecreasing through the origin,
  /// adaptation gains are positive and no saturation is applied. The
  /// frequency restoration certificate only covers controllers that pass.
  bool in_certified_class(std::string* reason = nullptr) const;

  /// Throws std::invalid_argument if parameters violate their invariants
  /// (dimension mismatch, negative slopes, gains below the floor).
  void validate(int n) const;

  std::string type_name() const;

 private:
  int n_ = 0;
  BaseKind kind_ = BaseKind::Droop;
  AdaptiveMode mode_ = AdaptiveMode::None;
  DroopParams droop_;
  MonotonePwlParams pwl_;
  AdaptiveParams adaptive_;
  std::optional<double> saturation_;
};

/// Controller parameter files: {type, base, ...}. The optional `raw` block
/// carries unconstrained training parameters so checkpoints resume exactly.
std::string dump_controller(const Controller& c,
                            const Eigen::VectorXd* raw = nullptr);
Controller parse_controller(const std::string& json_text,
                            Eigen::VectorXd* raw = nullptr);

}  // namespace swingfreq
