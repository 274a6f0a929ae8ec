#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <vector>

namespace swingfreq {

/// Time unit of the feature index k: features are functions of k = t / kFeatureStep.
inline constexpr double kFeatureStep = 0.01;

struct Feature {
  enum class Kind { Constant, Sine };
  Kind kind = Kind::Constant;
  double eta = 0.0;  // rad per feature step, Sine only

  double operator()(double k) const {
    return kind == Kind::Constant ? 1.0 : std::sin(eta * k);
  }
};

/// Per-bus features phi_i(t) and true coefficients a_i, giving the net
/// injection variation phi_i(t)^T a_i. Every bus carries exactly one
/// constant feature.
class BasisSignal {
 public:
  struct Bus {
    std::vector<Feature> features;
    Eigen::VectorXd coefficients;
  };

  BasisSignal() = default;
  explicit BasisSignal(std::vector<Bus> buses);

  /// phi_i = (1) with coefficient a_i on every bus.
  static BasisSignal constant(const Eigen::VectorXd& coefficients);
  /// No load variation at all: phi_i = (1), a_i = 0.
  static BasisSignal none(int n);

  int size() const { return static_cast<int>(buses_.size()); }
  int dim(int bus) const { return static_cast<int>(buses_[bus].features.size()); }
  int constant_index(int bus) const { return constant_index_[bus]; }
  const Bus& bus(int i) const { return buses_[i]; }
  const Eigen::VectorXd& coefficients(int bus) const {
    return buses_[bus].coefficients;
  }

  Eigen::VectorXd features(int bus, double t) const;
  void features_into(int bus, double t, Eigen::Ref<Eigen::VectorXd> out) const;
  /// phi_i(t)^T a_i
  double variation(int bus, double t) const;

 private:
  std::vector<Bus> buses_;
  std::vector<int> constant_index_;
};

/// Sinusoidal basis phi_i(k) = (sin(eta1 k), sin(eta2 k), 1) with
/// eta ~ U[0.005 pi, 0.02 pi] and coefficients ~ U[0.1, 0.2].
BasisSignal make_sinusoid_basis(int n, std::uint64_t seed);

struct StepChange {
  int bus = 0;
  double magnitude = 0.0;  // p.u., added to the injection
  double onset = 0.0;      // s
};

struct Disturbance {
  static constexpr double kDefaultCap = 1.0;
  // Onsets that fall on the time grid must not be missed by rounding in k*dt.
  static constexpr double kOnsetSlack = 1e-9;

  std::vector<StepChange> steps;
  double noise = 0.0;  // per-step uniform bound, p.u.
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on |magnitude| > cap or noise < 0.
  void validate(int n, double cap = kDefaultCap) const;
  /// Sum of step magnitudes active at bus i at time t.
  double step_offset(int bus, double t) const;
};

}  // namespace swingfreq
