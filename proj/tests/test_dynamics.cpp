#include "swingfreq/dynamics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace swingfreq;
using Eigen::VectorXd;

namespace {

const std::string kData = SWINGFREQ_DATA_DIR;

Network two_bus(double p = 0.5) {
  return Network(VectorXd::Ones(2), VectorXd::Ones(2), VectorXd{{p, -p}}, {{0, 1, 1.0}});
}

VectorXd two_bus_star(double p = 0.5) {
  const double d = std::asin(2 * p / 2) / 2;  // sin(2d) = p
  return VectorXd{{d, -d}};
}

Controller droop(int n, double k) { return Controller::droop({VectorXd::Constant(n, k)}); }

AdaptiveParams gains(int n, int dim, double a) {
  AdaptiveParams p;
  p.diag.assign(n, VectorXd::Constant(dim, a));
  return p;
}

}  // namespace

TEST(Step, EulerByHand) {
  const Network net = two_bus();
  const Controller c = droop(2, 1.0).with_adaptation(gains(2, 1, 2.0), AdaptiveMode::Integral);
  const BasisSignal basis = BasisSignal::none(2);
  Disturbance dist;
  dist.steps = {{0, 0.1, 0.0}};
  SystemState x = initial_state(two_bus_star(), c, basis);
  x = step(net, x, c, basis, dist, 0.0, 0.01, Integrator::Euler);
  // Only the step unbalances bus 1 at t = 0: w1 = dt * 0.1 / M.
  EXPECT_NEAR(x.omega[0], 0.001, 1e-15);
  EXPECT_NEAR(x.omega[1], 0.0, 1e-15);
  EXPECT_NEAR(x.a_hat[0], 0.0, 1e-15);
  // delta moves by dt * (w - mean w) = 0 on the first step.
  EXPECT_NEAR(x.delta[0], two_bus_star()[0], 1e-15);
  x = step(net, x, c, basis, dist, 0.01, 0.01, Integrator::Euler);
  // a_hat' = A w = 2 * 0.001.
  EXPECT_NEAR(x.a_hat[0], 0.01 * 0.002, 1e-15);
  EXPECT_NEAR(x.delta[0] - two_bus_star()[0], 0.01 * 0.0005, 1e-15);
}

TEST(Rollout, EquilibriumIsStationary) {
  const Network net = load_case(kData + "/case39.json");
  const VectorXd ds = solve_equilibrium(net).delta_star;
  const Controller c = droop(39, 1.0);
  const BasisSignal basis = BasisSignal::none(39);
  const Trajectory tr = rollout(net, c, basis, {}, initial_state(ds, c, basis), {2.0, 0.01});
  EXPECT_LT(tr.omega.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Rollout, AntisymmetryOfSymmetricCase) {
  const Network net = two_bus(0.0);
  const Controller c = droop(2, 0.7);
  const BasisSignal basis = BasisSignal::none(2);
  SystemState x0 = initial_state(VectorXd::Zero(2), c, basis);
  x0.omega = VectorXd{{0.3, -0.3}};
  const Trajectory tr = rollout(net, c, basis, {}, x0, {5.0, 0.01});
  for (int k = 0; k < tr.records(); ++k) {
    EXPECT_NEAR(tr.omega(k, 0), -tr.omega(k, 1), 1e-14);
    EXPECT_NEAR(tr.delta(k, 0), -tr.delta(k, 1), 1e-14);
  }
}

TEST(Rollout, CoiAnglesSumToZero) {
  const Network net = load_case(kData + "/case39.json");
  const VectorXd ds = solve_equilibrium(net).delta_star;
  const Controller c = droop(39, 2.0);
  const BasisSignal basis = make_sinusoid_basis(39, 3);
  Disturbance dist;
  dist.steps = {{4, 0.8, 0.5}, {20, -0.6, 1.0}};
  const Trajectory tr = rollout(net, c, basis, dist, initial_state(ds, c, basis), {3.0, 0.01});
  for (int k = 0; k < tr.records(); ++k) EXPECT_LT(std::abs(tr.delta.row(k).sum()), 1e-12);
}

TEST(Rollout, DroopStaticOffset) {
  const Network net = two_bus();
  const Controller c = droop(2, 1.0);
  const BasisSignal basis = BasisSignal::none(2);
  Disturbance dist;
  dist.steps = {{0, 0.2, 0.0}};
  const Trajectory tr =
      rollout(net, c, basis, dist, initial_state(two_bus_star(), c, basis), {40.0, 0.01});
  // Static balance: 0.2 = (sum D + sum k) w.
  EXPECT_NEAR(tr.omega(tr.records() - 1, 0), 0.2 / 4.0, 1e-8);
  EXPECT_NEAR(tr.omega(tr.records() - 1, 1), 0.2 / 4.0, 1e-8);
}

TEST(Rollout, BoundedAndSettlingUnderMonotoneControl) {
  const Network net = two_bus();
  MonotonePwlParams p;
  p.breakpoints = MonotonePwlParams::uniform_grid(6, 0.2);
  p.slopes = Eigen::MatrixXd::Constant(2, p.segments(), 0.5);
  p.slopes(0, 5) = 3.0;
  const Controller c = Controller::pwl(p);
  const BasisSignal basis = BasisSignal::constant(VectorXd{{0.1, -0.05}});
  const Trajectory tr =
      rollout(net, c, basis, {}, initial_state(two_bus_star(), c, basis), {20.0, 0.01});
  const double peak = tr.omega.cwiseAbs().maxCoeff();
  EXPECT_TRUE(std::isfinite(peak));
  EXPECT_LT(tr.omega.row(tr.records() - 1).cwiseAbs().maxCoeff(), peak);
}

TEST(Rollout, IntegralActionRestoresAndLearnsStep) {
  const Network net = two_bus();
  const Controller c = droop(2, 1.0).with_adaptation(gains(2, 1, 1.0), AdaptiveMode::Full);
  const BasisSignal basis = BasisSignal::constant(VectorXd{{0.1, 0.1}});
  Disturbance dist;
  dist.steps = {{1, -0.3, 1.0}};
  const Trajectory tr =
      rollout(net, c, basis, dist, initial_state(two_bus_star(), c, basis), {60.0, 0.01});
  const int last = tr.records() - 1;
  EXPECT_LT(tr.omega.row(last).cwiseAbs().maxCoeff(), 1e-4);
  // Total estimate matches the total constant injection change; the split
  // between buses is not identifiable from a common frequency.
  EXPECT_NEAR(tr.a_hat.row(last).sum(), 0.2 - 0.3, 0.02 * 0.1);
}

TEST(Rollout, NoiseIsSeededAndBounded) {
  const Network net = two_bus();
  const Controller c = droop(2, 1.0);
  const BasisSignal basis = BasisSignal::none(2);
  Disturbance dist;
  dist.noise = 0.03;
  dist.seed = 17;
  const auto x0 = initial_state(two_bus_star(), c, basis);
  const Trajectory a = rollout(net, c, basis, dist, x0, {1.0, 0.01});
  const Trajectory b = rollout(net, c, basis, dist, x0, {1.0, 0.01});
  EXPECT_EQ((a.omega - b.omega).cwiseAbs().maxCoeff(), 0.0);
  for (int k = 0; k < a.records(); ++k) {
    EXPECT_LE(std::abs(a.p(k, 0) - 0.5), 0.03);
    EXPECT_LE(std::abs(a.p(k, 1) + 0.5), 0.03);
  }
  dist.seed = 18;
  const Trajectory other = rollout(net, c, basis, dist, x0, {1.0, 0.01});
  EXPECT_GT((a.omega - other.omega).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Rollout, StepOnsetLandsOnGrid) {
  const Network net = two_bus();
  const Controller c = droop(2, 1.0);
  const BasisSignal basis = BasisSignal::none(2);
  Disturbance dist;
  dist.steps = {{0, 0.5, 2.0}};
  const Trajectory tr =
      rollout(net, c, basis, dist, initial_state(two_bus_star(), c, basis), {3.0, 0.01});
  const int k = tr.index_at(2.0);
  EXPECT_DOUBLE_EQ(tr.p(k - 1, 0), 0.5);
  EXPECT_DOUBLE_EQ(tr.p(k, 0), 1.0);
  EXPECT_LT(tr.omega.topRows(k + 1).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Rollout, BlowUpReportsStep) {
  const Network net = two_bus();
  const Controller c = droop(2, 1.0);
  const BasisSignal basis = BasisSignal::none(2);
  SystemState x0 = initial_state(two_bus_star(), c, basis);
  x0.omega = VectorXd{{1.0, -1.0}};
  try {
    rollout(net, c, basis, {}, x0, {2000.0, 5.0, Integrator::Euler});
    FAIL() << "expected blow-up";
  } catch (const IntegrationError& e) {
    EXPECT_GT(e.step(), 0);
  }
  EXPECT_THROW(step_count(1.0, 0.3), std::invalid_argument);
}

TEST(Output, CsvHeaderAndRows) {
  const Network net = two_bus();
  const Controller c = droop(2, 1.0);
  const BasisSignal basis = make_sinusoid_basis(2, 1);
  Disturbance dist;
  dist.steps = {{0, 0.5, 2.0}};
  const Trajectory tr =
      rollout(net, c, basis, dist, initial_state(two_bus_star(), c, basis), {15.0, 0.01});
  std::istringstream in(trajectory_csv(tr));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,delta_1,delta_2,omega_1,omega_2,u_1,u_2,p_1,p_2");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 1501);
}
