#include "swingfreq/controllers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace swingfreq;
using Eigen::VectorXd;

namespace {

MonotonePwlParams random_pwl(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> s(0.0, 3.0);
  MonotonePwlParams p;
  p.breakpoints = MonotonePwlParams::uniform_grid(8, 0.4);
  p.slopes = Eigen::MatrixXd::NullaryExpr(n, p.segments(), [&] { return s(rng); });
  return p;
}

// Independent evaluation: integrate the slope profile with a fine midpoint
// rule. Cells straddling a kink contribute at most h * slope jump each.
double integrate_slopes(const MonotonePwlParams& p, int bus, double w) {
  const int steps = 1000000;
  const double h = w / steps;
  double u = 0.0;
  for (int k = 0; k < steps; ++k) {
    const double x = (k + 0.5) * h;
    u += h * p.slopes(bus, p.segment_of(x));
  }
  return u;
}

}  // namespace

TEST(Softplus, InverseAndDerivative) {
  for (double y : {1e-6, 0.1, 1.0, 5.0, 40.0}) EXPECT_NEAR(softplus(softplus_inverse(y)), y, 1e-9 * y);
  for (double x : {-3.0, 0.0, 2.0}) {
    const double fd = (softplus(x + 1e-6) - softplus(x - 1e-6)) / 2e-6;
    EXPECT_NEAR(softplus_grad(x), fd, 1e-8);
  }
}

TEST(Droop, LinearAction) {
  DroopParams d{VectorXd{{2.0, 0.5}}};
  EXPECT_DOUBLE_EQ(droop_u(d, 0, 0.1), 0.2);
  EXPECT_DOUBLE_EQ(droop_u(d, 1, -0.4), -0.2);
}

TEST(Pwl, MatchesIntegratedSlopes) {
  std::mt19937_64 rng(2);
  const auto p = random_pwl(3, rng);
  for (double w : {-0.9, -0.37, -0.05, 0.0, 0.013, 0.25, 0.6})
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(pwl_u(p, i, w), integrate_slopes(p, i, w), 3e-5);
}

TEST(Pwl, MonotoneThroughOrigin) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_pwl(2, rng);
    EXPECT_EQ(pwl_u(p, 0, 0.0), 0.0);
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    EXPECT_LE(pwl_u(p, 1, a), pwl_u(p, 1, b));
    EXPECT_GE(pwl_u(p, 0, a) * a, 0.0);
  }
}

TEST(Pwl, KinkBelongsToLeftSegment) {
  MonotonePwlParams p;
  p.breakpoints = {-0.1, 0.1};
  EXPECT_EQ(p.segment_of(0.1), 1);
  EXPECT_EQ(p.segment_of(0.1000001), 2);
  EXPECT_EQ(p.segment_of(-0.1), 0);
  EXPECT_DOUBLE_EQ(p.overlap(1, 0.3), 0.1);
  EXPECT_DOUBLE_EQ(p.overlap(2, 0.3), 0.2);
  EXPECT_DOUBLE_EQ(p.overlap(0, -0.3), -0.2);
  EXPECT_DOUBLE_EQ(p.overlap(2, -0.3), 0.0);
}

TEST(Adaptive, ActionAndLaw) {
  const VectorXd phi{{std::sin(0.3), std::sin(0.7), 1.0}};
  const VectorXd a_hat{{0.1, -0.2, 0.3}};
  EXPECT_NEAR(adaptive_u(0.5, phi, a_hat), 0.5 + phi.dot(a_hat), 1e-15);
  AdaptiveParams ap{{VectorXd{{1.0, 2.0, 3.0}}}};
  const VectorXd r = adaptation_rhs(ap, 0, 0.1, phi);
  EXPECT_NEAR(r[2], 0.3, 1e-15);
  EXPECT_NEAR(r[1], 0.2 * phi[1], 1e-15);
  EXPECT_THROW(adaptive_u(0.0, phi, VectorXd::Zero(2)), std::invalid_argument);
}

TEST(Controller, CertifiedClass) {
  const Controller droop = Controller::droop({VectorXd::Ones(2)});
  std::string why;
  EXPECT_TRUE(droop.in_certified_class(&why));
  EXPECT_FALSE(droop.with_saturation(0.5).in_certified_class(&why));
  EXPECT_NE(why.find("saturation"), std::string::npos);
  EXPECT_FALSE(Controller::linear(-VectorXd::Ones(2)).in_certified_class());
  EXPECT_DOUBLE_EQ(droop.with_saturation(0.5).u(0, 3.0, VectorXd(), VectorXd()), 0.5);
}

TEST(Controller, JsonRoundTrip) {
  std::mt19937_64 rng(4);
  AdaptiveParams a;
  a.diag = {VectorXd{{1.0, 2.0, 3.0}}, VectorXd{{0.5, 0.25, 4.0}}, VectorXd{{1e-4, 1.0, 2.0}}};
  const Controller c = Controller::pwl(random_pwl(3, rng)).with_adaptation(a, AdaptiveMode::Full);
  const VectorXd raw = VectorXd::LinSpaced(5, -1.0, 1.0);
  VectorXd raw_back;
  const Controller back = parse_controller(dump_controller(c, &raw), &raw_back);
  EXPECT_EQ(back.type_name(), c.type_name());
  EXPECT_EQ((back.pwl_params().slopes - c.pwl_params().slopes).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(back.adaptive_params().diag[2][0], 1e-4);
  EXPECT_EQ((raw_back - raw).cwiseAbs().maxCoeff(), 0.0);
  for (double w : {-0.3, 0.01, 0.2}) EXPECT_EQ(back.base_u(1, w), c.base_u(1, w));
}

TEST(Controller, ValidationRejectsBadParameters) {
  MonotonePwlParams p;
  p.breakpoints = {0.0};
  p.slopes = Eigen::MatrixXd::Ones(2, 2);
  p.slopes(1, 0) = -0.1;
  EXPECT_THROW(Controller::pwl(p).validate(2), std::invalid_argument);
  AdaptiveParams a{{VectorXd::Constant(1, 1e-6), VectorXd::Ones(1)}};
  EXPECT_THROW(Controller::droop({VectorXd::Ones(2)})
                   .with_adaptation(a, AdaptiveMode::Integral)
                   .validate(2),
               std::invalid_argument);
}
