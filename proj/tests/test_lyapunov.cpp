#include "swingfreq/lyapunov.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace swingfreq;
using Eigen::VectorXd;

namespace {

const std::string kData = SWINGFREQ_DATA_DIR;

Network two_bus(double p) {
  return Network(VectorXd::Ones(2), VectorXd::Ones(2), VectorXd{{p, -p}}, {{0, 1, 1.0}});
}

Network ring3() {
  return Network(VectorXd::Ones(3), VectorXd::Ones(3), VectorXd{{0.3, -0.1, -0.2}},
                 {{0, 1, 1.0}, {1, 2, 1.0}, {0, 2, 1.0}});
}

AdaptiveParams gains(int n, int dim, double a) {
  AdaptiveParams p;
  p.diag.assign(n, VectorXd::Constant(dim, a));
  return p;
}

}  // namespace

TEST(EnergyFunction, TwoBusPotentialByHand) {
  const Network net = two_bus(0.0);
  // Wp = 1 - cos(0.1) for a 0.1 rad swing from the flat equilibrium.
  EXPECT_NEAR(eval_Wp(net, VectorXd{{0.05, -0.05}}, VectorXd::Zero(2)), 0.00499583472, 1e-11);
}

TEST(EnergyFunction, CosineAndBregmanFormsAgree) {
  const Network net = ring3();
  const VectorXd ds = solve_equilibrium(net).delta_star;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (int trial = 0; trial < 50; ++trial) {
    VectorXd d = ds + VectorXd::NullaryExpr(3, [&] { return u(rng); });
    d.array() -= d.mean();
    EXPECT_NEAR(eval_Wp(net, d, ds), eval_Wp_bregman(net, d, ds), 1e-13);
    EXPECT_GE(eval_Wp(net, d, ds), 0.0);
  }
  EXPECT_NEAR(eval_Wp(net, ds, ds), 0.0, 1e-15);
}

TEST(EnergyFunction, EstimateTermByHand) {
  const Network net = two_bus(0.0);
  SystemState s;
  s.delta = VectorXd::Zero(2);
  s.omega = VectorXd{{0.1, 0.2}};
  s.layout.offset = {0, 1, 2};
  s.a_hat = VectorXd{{1.0, 0.0}};
  const auto e = eval_V(net, s, {VectorXd::Zero(1), VectorXd::Zero(1)}, gains(2, 1, 2.0),
                        VectorXd::Zero(2));
  EXPECT_NEAR(e.est_err, 0.25, 1e-15);
  EXPECT_NEAR(e.kinetic, 0.5 * (0.01 + 0.04), 1e-15);
  EXPECT_NEAR(e.V, 0.25 + 0.025, 1e-15);
}

TEST(Gammas, RingLaplacianSpectrum) {
  // Complete graph K3 with unit weights: Laplacian eigenvalues 0, 3, 3.
  const Network net = ring3();
  const auto [lo, hi] = coi_eigen_range(hessian_S(net, VectorXd::Zero(3)));
  EXPECT_NEAR(lo, 3.0, 1e-12);
  EXPECT_NEAR(hi, 3.0, 1e-12);
}

TEST(Gammas, SandwichHoldsOnSampledStates) {
  const Network net = load_case(kData + "/case39.json");
  const VectorXd ds = solve_equilibrium(net).delta_star;
  const AdaptiveParams a = gains(39, 3, 5.0);
  GammaOptions opts;
  opts.samples = 500;
  const GammaBounds g = compute_gammas(net, a, ds, opts);
  ASSERT_GT(g.beta1, 0.0);
  ASSERT_LE(g.gamma1, g.gamma2);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> gauss;
  const BasisSignal basis = make_sinusoid_basis(39, 2);
  std::vector<VectorXd> coeffs;
  for (int i = 0; i < 39; ++i) coeffs.push_back(basis.coefficients(i));
  int tested = 0;
  while (tested < 300) {
    SystemState s;
    VectorXd dir = VectorXd::NullaryExpr(39, [&] { return gauss(rng); });
    dir.array() -= dir.mean();
    s.delta = ds + 0.05 * dir / dir.norm() * std::abs(gauss(rng));
    if (max_edge_difference(net, s.delta) > g.max_angle) continue;
    s.omega = VectorXd::NullaryExpr(39, [&] { return 0.1 * gauss(rng); });
    s.layout.offset.resize(40);
    for (int i = 0; i <= 39; ++i) s.layout.offset[i] = 3 * i;
    s.a_hat = VectorXd::NullaryExpr(117, [&] { return 0.2 * gauss(rng); });
    const double v = eval_V(net, s, coeffs, a, ds).V;
    const double x2 = deviation_norm2(s, coeffs, ds);
    EXPECT_LE(g.gamma1 * x2, v);
    EXPECT_LE(v, g.gamma2 * x2);
    ++tested;
  }
}

TEST(Decrease, AdaptiveTrajectoryPasses) {
  const Network net = two_bus(0.5);
  const VectorXd ds = solve_equilibrium(net).delta_star;
  const AdaptiveParams a = gains(2, 3, 2.0);
  const Controller c = Controller::droop({VectorXd::Ones(2)}).with_adaptation(a, AdaptiveMode::Full);
  const BasisSignal basis = make_sinusoid_basis(2, 4);
  Disturbance dist;
  dist.steps = {{1, -0.4, 1.0}};
  const Trajectory tr =
      rollout(net, c, basis, dist, initial_state(ds, c, basis), {10.0, 0.005});
  const DecreaseReport rep = check_decrease(tr, net, a, ds);
  EXPECT_TRUE(rep.pass) << "worst margin " << rep.worst_margin << " at " << rep.worst_time;
  EXPECT_EQ(rep.violations, 0);
  EXPECT_GT(rep.checked, 1900);
}

TEST(Decrease, NegativeFeedbackIsCaught) {
  const Network net = two_bus(0.5);
  const VectorXd ds = solve_equilibrium(net).delta_star;
  const Controller c = Controller::linear(-VectorXd::Ones(2));
  const BasisSignal basis = BasisSignal::none(2);
  SystemState x0 = initial_state(ds, c, basis);
  x0.omega = VectorXd{{0.02, -0.01}};
  const Trajectory tr = rollout(net, c, basis, {}, x0, {2.0, 0.005});
  const DecreaseReport rep = check_decrease(tr, net, {}, ds);
  EXPECT_FALSE(rep.pass);
  EXPECT_GT(rep.violations, 0);
  EXPECT_GT(rep.worst_margin, 0.0);
}

TEST(Decrease, RejectsNoisyTrajectories) {
  const Network net = two_bus(0.5);
  const VectorXd ds = solve_equilibrium(net).delta_star;
  const Controller c = Controller::droop({VectorXd::Ones(2)});
  const BasisSignal basis = BasisSignal::none(2);
  Disturbance dist;
  dist.noise = 0.01;
  const Trajectory tr = rollout(net, c, basis, dist, initial_state(ds, c, basis), {0.5, 0.01});
  EXPECT_THROW(check_decrease(tr, net, {}, ds), std::invalid_argument);
}

TEST(RegionOfAttraction, SublevelMembership) {
  const Network net = two_bus(0.5);
  const VectorXd ds = solve_equilibrium(net).delta_star;
  const GammaBounds g = compute_gammas(net, gains(2, 1, 1.0), ds);
  const RoaEstimate roa = estimate_roa(net, g, ds);
  ASSERT_TRUE(roa.valid);
  EXPECT_TRUE(roa.contains(0.0));
  EXPECT_FALSE(roa.contains(roa.r * roa.r));
  // On the ball boundary W2 exceeds rho because gamma2 >= gamma1.
  EXPECT_GT(roa.gamma2 * roa.r * roa.r, roa.rho);
}

TEST(RegionOfAttraction, InSetStartsRestoreFrequency) {
  const Network net = two_bus(0.5);
  const VectorXd ds = solve_equilibrium(net).delta_star;
  const AdaptiveParams a = gains(2, 1, 1.0);
  const Controller c = Controller::droop({VectorXd::Ones(2)}).with_adaptation(a, AdaptiveMode::Full);
  const BasisSignal basis = BasisSignal::constant(VectorXd{{0.05, -0.02}});
  const GammaBounds g = compute_gammas(net, a, ds);
  const RoaEstimate roa = estimate_roa(net, g, ds);
  std::vector<VectorXd> coeffs = {basis.coefficients(0), basis.coefficients(1)};
  int tested = 0;
  for (double dd : {-1.0, 0.0, 1.0})
    for (double w : {-1.0, 1.0})
      for (double ah : {-1.0, 1.0}) {
        SystemState x0 = initial_state(ds, c, basis);
        const double s = 0.3 * std::sqrt(roa.rho / g.gamma2);
        x0.delta += VectorXd{{dd * s, -dd * s}} / 2;
        x0.omega = VectorXd{{w * s / 2, -w * s / 3}};
        x0.a_hat = VectorXd{{coeffs[0][0] + ah * s / 2, coeffs[1][0] - ah * s / 2}};
        ASSERT_TRUE(roa.contains(deviation_norm2(x0, coeffs, ds)));
        const Trajectory tr = rollout(net, c, basis, {}, x0, {30.0, 0.01});
        EXPECT_LT(tr.omega.row(tr.records() - 1).cwiseAbs().maxCoeff(), 1e-4);
        ++tested;
      }
  EXPECT_EQ(tested, 12);
}
