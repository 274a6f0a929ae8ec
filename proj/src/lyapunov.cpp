#include "swingfreq/lyapunov.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace swingfreq {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double eval_Wp(const Network& net, const VectorXd& delta,
               const VectorXd& delta_star) {
  // Each unordered line appears twice in the double sums.
  double w = 0.0;
  for (const auto& l : net.lines()) {
    const double d = delta[l.from] - delta[l.to];
    const double ds = delta_star[l.from] - delta_star[l.to];
    w -= l.susceptance * (std::cos(d) - std::cos(ds));
    w -= l.susceptance * std::sin(ds) *
         ((delta[l.from] - delta_star[l.from]) - (delta[l.to] - delta_star[l.to]));
  }
  return w;
}

double eval_Wp_bregman(const Network& net, const VectorXd& delta,
                       const VectorXd& delta_star) {
  return potential_S(net, delta) - potential_S(net, delta_star) -
         grad_S(net, delta_star).dot(delta - delta_star);
}

std::vector<VectorXd> effective_coefficients(const BasisSignal& basis,
                                             const Disturbance& dist,
                                             double t) {
  std::vector<VectorXd> a;
  a.reserve(basis.size());
  for (int i = 0; i < basis.size(); ++i) {
    VectorXd ai = basis.coefficients(i);
    ai[basis.constant_index(i)] += dist.step_offset(i, t);
    a.push_back(std::move(ai));
  }
  return a;
}

LyapunovEval eval_V(const Network& net, const SystemState& state,
                    const std::vector<VectorXd>& a, const AdaptiveParams& gains,
                    const VectorXd& delta_star) {
  LyapunovEval e;
  e.kinetic = 0.5 * state.omega.cwiseAbs2().dot(net.inertia());
  e.Wp = eval_Wp(net, state.delta, delta_star);
  const int n = net.size();
  if (state.a_hat.size() > 0) {
    if (static_cast<int>(a.size()) != n || static_cast<int>(gains.diag.size()) != n)
      throw std::invalid_argument("coefficient or gain list has wrong length");
    for (int i = 0; i < n; ++i) {
      const auto ah = state.a_hat_of(i);
      if (ah.size() != a[i].size() || ah.size() != gains.diag[i].size())
        throw std::invalid_argument("estimate and coefficient dimensions differ at bus " +
                                    std::to_string(i + 1));
      const VectorXd err = ah - a[i];
      e.est_err += 0.5 * (err.cwiseAbs2().array() / gains.diag[i].array()).sum();
    }
  }
  e.V = e.kinetic + e.Wp + e.est_err;
  return e;
}

LyapunovEval eval_V(const Network& net, const SystemState& state,
                    const BasisSignal& basis, const AdaptiveParams& gains,
                    const VectorXd& delta_star) {
  std::vector<VectorXd> a;
  for (int i = 0; i < basis.size(); ++i) a.push_back(basis.coefficients(i));
  return eval_V(net, state, a, gains, delta_star);
}

double deviation_norm2(const SystemState& state, const std::vector<VectorXd>& a,
                       const VectorXd& delta_star) {
  double s = (state.delta - delta_star).squaredNorm() + state.omega.squaredNorm();
  for (std::size_t i = 0; i < a.size() && state.a_hat.size() > 0; ++i)
    s += (state.a_hat_of(static_cast<int>(i)) - a[i]).squaredNorm();
  return s;
}

std::pair<double, double> coi_eigen_range(const MatrixXd& h) {
  const int n = static_cast<int>(h.rows());
  if (n < 2) return {0.0, 0.0};
  // Orthonormal basis of 1-perp from the QR of [1 | I].
  MatrixXd a(n, n);
  a.col(0).setOnes();
  a.rightCols(n - 1) = MatrixXd::Identity(n, n).leftCols(n - 1);
  Eigen::HouseholderQR<MatrixXd> qr(a);
  const MatrixXd q = qr.householderQ() * MatrixXd::Identity(n, n);
  const MatrixXd basis = q.rightCols(n - 1);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(basis.transpose() * h * basis,
                                             Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

GammaBounds compute_gammas(const Network& net, const AdaptiveParams& gains,
                           const VectorXd& delta_star, GammaOptions opts) {
  const int n = net.size();
  if (max_edge_difference(net, delta_star) > opts.max_angle)
    throw SolverError("equilibrium lies outside the sampled angle region");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  auto consider = [&](const MatrixXd& h) {
    auto [a, b] = coi_eigen_range(h);
    lo = std::min(lo, a);
    hi = std::max(hi, b);
  };

  // Corners: every line at the region boundary (smallest weights) and at
  // zero difference (largest weights). Weighted Laplacians are monotone in
  // their weights, so these bracket every Hessian in the region.
  {
    MatrixXd low = MatrixXd::Zero(n, n), high = MatrixXd::Zero(n, n);
    for (const auto& l : net.lines()) {
      for (auto [m, w] : {std::pair<MatrixXd*, double>{&low, l.susceptance * std::cos(opts.max_angle)},
                          std::pair<MatrixXd*, double>{&high, l.susceptance}}) {
        (*m)(l.from, l.to) -= w;
        (*m)(l.to, l.from) -= w;
        (*m)(l.from, l.from) += w;
        (*m)(l.to, l.to) += w;
      }
    }
    consider(low);
    consider(high);
  }

  // Latin-hypercube directions, scaled to a stratified fraction of the
  // largest step that keeps every edge inside the region.
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int s = std::max(opts.samples, 1);
  std::vector<std::vector<int>> strata(n + 1, std::vector<int>(s));
  for (auto& col : strata) {
    std::iota(col.begin(), col.end(), 0);
    std::shuffle(col.begin(), col.end(), rng);
  }
  for (int k = 0; k < opts.samples; ++k) {
    VectorXd dir(n);
    for (int i = 0; i < n; ++i) dir[i] = 2.0 * (strata[i][k] + unit(rng)) / s - 1.0;
    dir = project_coi(dir);
    // Largest t with |d*_ij + t dir_ij| <= max_angle on every line.
    double t_max = std::numeric_limits<double>::infinity();
    for (const auto& l : net.lines()) {
      const double base = delta_star[l.from] - delta_star[l.to];
      const double slope = dir[l.from] - dir[l.to];
      if (slope > 0) t_max = std::min(t_max, (opts.max_angle - base) / slope);
      if (slope < 0) t_max = std::min(t_max, (-opts.max_angle - base) / slope);
    }
    if (!std::isfinite(t_max)) continue;
    const double frac = (strata[n][k] + unit(rng)) / s;
    consider(hessian_S(net, delta_star + frac * t_max * dir));
  }

  GammaBounds g;
  g.beta1 = 0.5 * lo;
  g.beta2 = 0.5 * hi;
  g.max_angle = opts.max_angle;
  g.samples = opts.samples;
  if (!(g.beta1 > 0.0))
    throw SolverError("sampled beta1 is not positive; shrink the angle region");

  double min_inv = std::numeric_limits<double>::infinity();
  double max_inv = 0.0;
  for (const auto& d : gains.diag) {
    for (Eigen::Index j = 0; j < d.size(); ++j) {
      min_inv = std::min(min_inv, 1.0 / d[j]);
      max_inv = std::max(max_inv, 1.0 / d[j]);
    }
  }
  const double m_min = net.inertia().minCoeff();
  const double m_max = net.inertia().maxCoeff();
  // The estimate term is a quadratic form in A^-1, so its bounds come from
  // the eigenvalues of A^-1.
  g.gamma1 = 0.5 * std::min({m_min, 2.0 * g.beta1, min_inv});
  g.gamma2 = 0.5 * std::max({m_max, 2.0 * g.beta2, max_inv});
  return g;
}

DecreaseReport check_decrease(const Trajectory& traj, const Network& net,
                              const AdaptiveParams& gains,
                              const VectorXd& delta_star) {
  if (traj.disturbance.noise != 0.0)
    throw std::invalid_argument("decrease check needs a noise-free trajectory");
  const int records = traj.records();
  const double dt = traj.dt;
  std::vector<double> v(records), w0(records);
  std::vector<int> segment(records);
  std::vector<VectorXd> prev;
  int seg = 0;
  for (int k = 0; k < records; ++k) {
    auto a = effective_coefficients(traj.basis, traj.disturbance, traj.t[k]);
    if (k > 0) {
      bool same = true;
      for (std::size_t i = 0; i < a.size(); ++i) same &= a[i] == prev[i];
      if (!same) ++seg;
    }
    segment[k] = seg;
    const SystemState s = traj.state(k);
    v[k] = eval_V(net, s, a, gains, delta_star).V;
    w0[k] = s.omega.cwiseAbs2().dot(net.damping());
    prev = std::move(a);
  }

  DecreaseReport rep;
  rep.worst_margin = -std::numeric_limits<double>::infinity();
  rep.worst_excess = -std::numeric_limits<double>::infinity();
  int begin = 0;
  while (begin < records) {
    int end = begin;
    while (end + 1 < records && segment[end + 1] == segment[begin]) ++end;
    const int len = end - begin + 1;
    if (len >= 3) {
      // Error model: central differences err by dt^2 |V'''| / 6 and the
      // one-sided ends by dt^2 |V'''| / 3; c = |V'''|max with a 3x margin.
      double third = 0.0;
      for (int k = begin + 1; k + 2 <= end; ++k) {
        const double d3 = (v[k + 2] - 3 * v[k + 1] + 3 * v[k] - v[k - 1]) / (dt * dt * dt);
        third = std::max(third, std::abs(d3));
      }
      double vmax = 0.0;
      for (int k = begin; k <= end; ++k) vmax = std::max(vmax, std::abs(v[k]));
      const double c = third;
      const double roundoff = 64.0 * std::numeric_limits<double>::epsilon() * vmax / dt;
      const double tol = c * dt * dt + roundoff;
      rep.tolerance_constant = std::max(rep.tolerance_constant, c);
      for (int k = begin; k <= end; ++k) {
        double vdot;
        if (k == begin)
          vdot = (-3 * v[k] + 4 * v[k + 1] - v[k + 2]) / (2 * dt);
        else if (k == end)
          vdot = (3 * v[k] - 4 * v[k - 1] + v[k - 2]) / (2 * dt);
        else
          vdot = (v[k + 1] - v[k - 1]) / (2 * dt);
        const double margin = vdot + w0[k];
        ++rep.checked;
        if (margin > rep.worst_margin) {
          rep.worst_margin = margin;
          rep.worst_index = k;
          rep.worst_time = traj.t[k];
        }
        rep.worst_excess = std::max(rep.worst_excess, margin - tol);
        if (margin > tol) ++rep.violations;
      }
    }
    begin = end + 1;
  }
  if (rep.checked == 0) {
    rep.worst_margin = 0.0;
    rep.worst_excess = 0.0;
  }
  rep.pass = rep.violations == 0;
  return rep;
}

RoaEstimate estimate_roa(const Network& net, const GammaBounds& g,
                         const VectorXd& delta_star, double margin_frac) {
  RoaEstimate roa;
  // |x_i - x_j| <= sqrt(2) |x| bounds every edge difference inside the ball.
  double r = std::numeric_limits<double>::infinity();
  for (const auto& l : net.lines()) {
    const double slack = g.max_angle - std::abs(delta_star[l.from] - delta_star[l.to]);
    r = std::min(r, slack / std::sqrt(2.0));
  }
  if (!std::isfinite(r) || r <= 0.0)
    throw SolverError("degenerate region of attraction radius");
  roa.r = r;
  roa.rho = g.gamma1 * r * r * (1.0 - margin_frac);
  roa.gamma2 = g.gamma2;
  roa.valid = roa.rho > 0.0;
  return roa;
}

std::string certificate_json(const GammaBounds& g, const DecreaseReport& d,
                             const RoaEstimate& roa, bool pass) {
  nlohmann::json j;
  j["gamma1"] = g.gamma1;
  j["gamma2"] = g.gamma2;
  j["beta1"] = g.beta1;
  j["beta2"] = g.beta2;
  j["beta_samples"] = g.samples;
  j["worst_margin"] = d.worst_margin;
  j["worst_time"] = d.worst_time;
  j["worst_excess"] = d.worst_excess;
  j["tolerance_constant"] = d.tolerance_constant;
  j["violations"] = d.violations;
  j["checked"] = d.checked;
  j["roa"] = {{"r", roa.r}, {"rho", roa.rho}};
  j["pass"] = pass;
  return j.dump(2);
}

}  // namespace swingfreq
