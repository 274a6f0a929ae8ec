#include "swingfreq/basis.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace swingfreq {

BasisSignal::BasisSignal(std::vector<Bus> buses) : buses_(std::move(buses)) {
  constant_index_.reserve(buses_.size());
  for (std::size_t i = 0; i < buses_.size(); ++i) {
    const auto& b = buses_[i];
    if (static_cast<std::size_t>(b.coefficients.size()) != b.features.size())
      throw std::invalid_argument("basis coefficient count mismatch at bus " +
                                  std::to_string(i));
    int found = -1;
    for (std::size_t j = 0; j < b.features.size(); ++j) {
      if (b.features[j].kind == Feature::Kind::Constant) {
        if (found >= 0)
          throw std::invalid_argument("bus " + std::to_string(i) +
                                      " has two constant features");
        found = static_cast<int>(j);
      }
    }
    if (found < 0)
      throw std::invalid_argument("bus " + std::to_string(i) +
                                  " lacks the constant feature");
    constant_index_.push_back(found);
  }
}

BasisSignal BasisSignal::constant(const Eigen::VectorXd& coefficients) {
  std::vector<Bus> buses;
  for (Eigen::Index i = 0; i < coefficients.size(); ++i) {
    buses.push_back({{Feature{}}, Eigen::VectorXd::Constant(1, coefficients[i])});
  }
  return BasisSignal(std::move(buses));
}

BasisSignal BasisSignal::none(int n) {
  return constant(Eigen::VectorXd::Zero(n));
}

void BasisSignal::features_into(int bus, double t,
                                Eigen::Ref<Eigen::VectorXd> out) const {
  const double k = t / kFeatureStep;
  const auto& f = buses_[bus].features;
  for (std::size_t j = 0; j < f.size(); ++j) out[j] = f[j](k);
}

Eigen::VectorXd BasisSignal::features(int bus, double t) const {
  Eigen::VectorXd out(dim(bus));
  features_into(bus, t, out);
  return out;
}

double BasisSignal::variation(int bus, double t) const {
  const double k = t / kFeatureStep;
  const auto& b = buses_[bus];
  double v = 0.0;
  for (std::size_t j = 0; j < b.features.size(); ++j)
    v += b.features[j](k) * b.coefficients[j];
  return v;
}

BasisSignal make_sinusoid_basis(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> eta(0.005 * std::numbers::pi,
                                             0.02 * std::numbers::pi);
  std::uniform_real_distribution<double> coef(0.1, 0.2);
  std::vector<BasisSignal::Bus> buses;
  buses.reserve(n);
  for (int i = 0; i < n; ++i) {
    BasisSignal::Bus b;
    b.features = {{Feature::Kind::Sine, eta(rng)},
                  {Feature::Kind::Sine, eta(rng)},
                  {Feature::Kind::Constant, 0.0}};
    b.coefficients = Eigen::VectorXd(3);
    for (int j = 0; j < 3; ++j) b.coefficients[j] = coef(rng);
    buses.push_back(std::move(b));
  }
  return BasisSignal(std::move(buses));
}

void Disturbance::validate(int n, double cap) const {
  if (!(noise >= 0.0)) throw std::invalid_argument("noise bound must be >= 0");
  for (const auto& s : steps) {
    if (s.bus < 0 || s.bus >= n)
      throw std::invalid_argument("step change at unknown bus " +
                                  std::to_string(s.bus));
    if (!(std::abs(s.magnitude) <= cap))
      throw std::invalid_argument("step magnitude exceeds cap");
    if (!std::isfinite(s.onset))
      throw std::invalid_argument("step onset must be finite");
  }
}

double Disturbance::step_offset(int bus, double t) const {
  double v = 0.0;
  for (const auto& s : steps)
    if (s.bus == bus && t + kOnsetSlack >= s.onset) v += s.magnitude;
  return v;
}

}  // namespace swingfreq
