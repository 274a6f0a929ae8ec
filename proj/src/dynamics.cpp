#include "swingfreq/dynamics.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace swingfreq {

using Eigen::VectorXd;
using json = nlohmann::json;

EstimateLayout EstimateLayout::make(const Controller& c,
                                    const BasisSignal& basis) {
  EstimateLayout l;
  const int n = basis.size();
  l.offset.resize(n + 1, 0);
  for (int i = 0; i < n; ++i) l.offset[i + 1] = l.offset[i] + c.adaptive_dim(i, basis);
  return l;
}

SystemState initial_state(const VectorXd& delta_star, const Controller& c,
                          const BasisSignal& basis) {
  SystemState s;
  s.delta = delta_star;
  s.omega = VectorXd::Zero(delta_star.size());
  s.layout = EstimateLayout::make(c, basis);
  s.a_hat = VectorXd::Zero(s.layout.total());
  return s;
}

ClosedLoop::ClosedLoop(const Network& net, const Controller& c,
                       const BasisSignal& basis)
    : net_(net), c_(c), basis_(basis), n_(net.size()),
      layout_(EstimateLayout::make(c, basis)) {
  if (basis.size() != n_)
    throw std::invalid_argument("basis signal is sized for a different network");
  if (c.size() != n_)
    throw std::invalid_argument("controller is sized for a different network");
  int widest = 1;
  for (int i = 0; i < n_; ++i) widest = std::max(widest, basis.dim(i));
  phi_.resize(widest);
  const int size = state_size();
  k1_.resize(size);
  k2_.resize(size);
  k3_.resize(size);
  k4_.resize(size);
  tmp_.resize(size);
}

VectorXd ClosedLoop::pack(const SystemState& s) const {
  VectorXd x(state_size());
  x << s.delta, s.omega, s.a_hat;
  return x;
}

SystemState ClosedLoop::unpack(const VectorXd& x) const {
  SystemState s;
  s.delta = x.head(n_);
  s.omega = x.segment(n_, n_);
  s.a_hat = x.tail(layout_.total());
  s.layout = layout_;
  return s;
}

void ClosedLoop::rhs(double t, const VectorXd& x, const VectorXd& held,
                     VectorXd& dx) const {
  const int n = n_;
  const auto delta = x.head(n);
  const auto omega = x.segment(n, n);
  const double mean_omega = omega.mean();
  auto domega = dx.segment(n, n);
  domega.setZero();
  for (const auto& l : net_.lines()) {
    const double f = l.susceptance * std::sin(delta[l.from] - delta[l.to]);
    domega[l.from] -= f;
    domega[l.to] += f;
  }
  const auto& m = net_.inertia();
  const auto& d = net_.damping();
  const auto& p_star = net_.p_star();
  const bool full = c_.adaptive_mode() == AdaptiveMode::Full;
  for (int i = 0; i < n; ++i) {
    const int li = basis_.dim(i);
    auto phi = phi_.head(li);
    basis_.features_into(i, t, phi);
    const double variation = phi.dot(basis_.coefficients(i));
    const double w = omega[i];
    const int off = layout_.offset[i];
    const int la = layout_.dim(i);
    double u;
    if (c_.is_adaptive()) {
      const auto& gains = c_.adaptive_params().diag[i];
      const auto a_hat = x.segment(2 * n + off, la);
      if (full) {
        u = c_.u(i, w, phi, a_hat);
        dx.segment(2 * n + off, la) = w * gains.cwiseProduct(phi);
      } else {
        const VectorXd one = VectorXd::Ones(1);
        u = c_.u(i, w, one, a_hat);
        dx[2 * n + off] = w * gains[0];
      }
    } else {
      u = c_.u(i, w, phi.head(0), phi.head(0));
    }
    domega[i] = (p_star[i] + variation + held[i] - d[i] * w - u + domega[i]) / m[i];
    dx[i] = w - mean_omega;
  }
}

VectorXd ClosedLoop::control(double t, const VectorXd& x) const {
  const int n = n_;
  VectorXd u(n);
  for (int i = 0; i < n; ++i) {
    const double w = x[n + i];
    if (!c_.is_adaptive()) {
      u[i] = c_.u(i, w, phi_.head(0), phi_.head(0));
      continue;
    }
    const int la = layout_.dim(i);
    auto phi = phi_.head(la);
    c_.features_into(i, basis_, t, phi);
    u[i] = c_.u(i, w, phi, x.segment(2 * n + layout_.offset[i], la));
  }
  return u;
}

VectorXd ClosedLoop::injection(double t, const VectorXd& held) const {
  VectorXd p(n_);
  for (int i = 0; i < n_; ++i)
    p[i] = net_.p_star()[i] + basis_.variation(i, t) + held[i];
  return p;
}

void ClosedLoop::advance(double t, double dt, Integrator method,
                         const VectorXd& held, VectorXd& x) const {
  if (method == Integrator::Euler) {
    rhs(t, x, held, k1_);
    x += dt * k1_;
  } else {
    rhs(t, x, held, k1_);
    tmp_ = x + 0.5 * dt * k1_;
    rhs(t + 0.5 * dt, tmp_, held, k2_);
    tmp_ = x + 0.5 * dt * k2_;
    rhs(t + 0.5 * dt, tmp_, held, k3_);
    tmp_ = x + dt * k3_;
    rhs(t + dt, tmp_, held, k4_);
    x += (dt / 6.0) * (k1_ + 2.0 * k2_ + 2.0 * k3_ + k4_);
  }
  x.head(n_).array() -= x.head(n_).mean();
}

namespace {

VectorXd held_offsets(const Disturbance& dist, int n, double t,
                      const VectorXd& noise) {
  VectorXd held(n);
  for (int i = 0; i < n; ++i) held[i] = dist.step_offset(i, t);
  if (noise.size() == n) held += noise;
  return held;
}

}  // namespace

SystemState step(const Network& net, const SystemState& state,
                 const Controller& controller, const BasisSignal& basis,
                 const Disturbance& dist, double t, double dt,
                 Integrator method, const VectorXd& noise) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (!state.finite()) throw IntegrationError("non-finite state", 0);
  ClosedLoop loop(net, controller, basis);
  VectorXd x = loop.pack(state);
  loop.advance(t, dt, method, held_offsets(dist, net.size(), t, noise), x);
  if (!x.allFinite())
    throw IntegrationError("state became non-finite during step", 0);
  return loop.unpack(x);
}

SystemState Trajectory::state(int k) const {
  SystemState s;
  s.delta = delta.row(k).transpose();
  s.omega = omega.row(k).transpose();
  s.a_hat = a_hat.row(k).transpose();
  s.layout = layout;
  return s;
}

int Trajectory::index_at(double time) const {
  for (int k = 0; k < records(); ++k)
    if (t[k] + Disturbance::kOnsetSlack >= time) return k;
  return records();
}

long step_count(double horizon, double dt) {
  if (!(dt > 0.0) || !(horizon >= 0.0))
    throw std::invalid_argument("dt must be positive and horizon nonnegative");
  const double ratio = horizon / dt;
  const long k = std::lround(ratio);
  if (std::abs(ratio - static_cast<double>(k)) > 1e-6)
    throw std::invalid_argument("horizon is not an integer multiple of dt");
  return k;
}

Trajectory rollout(const Network& net, const Controller& controller,
                   const BasisSignal& basis, const Disturbance& dist,
                   const SystemState& x0, const RolloutOptions& opts) {
  const long steps = step_count(opts.horizon, opts.dt);
  const int n = net.size();
  dist.validate(n);
  ClosedLoop loop(net, controller, basis);
  if (x0.a_hat.size() != loop.layout().total())
    throw std::invalid_argument("initial estimate has wrong dimension");

  Trajectory traj;
  traj.dt = opts.dt;
  traj.layout = loop.layout();
  traj.disturbance = dist;
  traj.basis = basis;
  traj.controller = controller.type_name();
  traj.method = opts.method;
  const long records = steps + 1;
  traj.t.resize(records);
  traj.delta.resize(records, n);
  traj.omega.resize(records, n);
  traj.u.resize(records, n);
  traj.p.resize(records, n);
  traj.a_hat.resize(records, loop.layout().total());

  std::mt19937_64 rng(dist.seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  VectorXd noise = VectorXd::Zero(n);

  VectorXd x = loop.pack(x0);
  x.head(n).array() -= x.head(n).mean();
  for (long k = 0; k < records; ++k) {
    const double t = static_cast<double>(k) * opts.dt;
    if (dist.noise > 0.0)
      for (int i = 0; i < n; ++i) noise[i] = dist.noise * uniform(rng);
    const VectorXd held = held_offsets(dist, n, t, noise);
    traj.t[k] = t;
    traj.delta.row(k) = x.head(n).transpose();
    traj.omega.row(k) = x.segment(n, n).transpose();
    traj.a_hat.row(k) = x.tail(loop.layout().total()).transpose();
    traj.u.row(k) = loop.control(t, x).transpose();
    traj.p.row(k) = loop.injection(t, held).transpose();
    if (k == steps) break;
    loop.advance(t, opts.dt, opts.method, held, x);
    if (!x.allFinite()) {
      std::ostringstream msg;
      msg << "integration blew up at step " << k + 1 << " (t = "
          << (k + 1) * opts.dt << " s)";
      throw IntegrationError(msg.str(), k + 1);
    }
  }
  return traj;
}

std::string trajectory_csv(const Trajectory& traj) {
  const int n = traj.buses();
  std::string out = "t";
  for (const char* name : {"delta", "omega", "u", "p"})
    for (int i = 1; i <= n; ++i) out += "," + std::string(name) + "_" + std::to_string(i);
  out += '\n';
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.12g", v);
    out += buf;
  };
  for (int k = 0; k < traj.records(); ++k) {
    put(traj.t[k]);
    for (const Eigen::MatrixXd* m : {&traj.delta, &traj.omega, &traj.u, &traj.p}) {
      for (int i = 0; i < n; ++i) {
        out += ',';
        put((*m)(k, i));
      }
    }
    out += '\n';
  }
  return out;
}

std::string trajectory_metadata_json(const Trajectory& traj) {
  json j;
  j["dt"] = traj.dt;
  j["records"] = traj.records();
  j["controller"] = traj.controller;
  j["integrator"] = traj.method == Integrator::Rk4 ? "rk4" : "euler";
  j["seed"] = traj.disturbance.seed;
  j["noise"] = traj.disturbance.noise;
  j["disturbance"] = json::array();
  for (const auto& s : traj.disturbance.steps)
    j["disturbance"].push_back(
        {{"bus", s.bus + 1}, {"magnitude", s.magnitude}, {"onset", s.onset}});
  j["basis"] = json::array();
  for (int i = 0; i < traj.basis.size(); ++i) {
    json b;
    const auto& bus = traj.basis.bus(i);
    b["bus"] = i + 1;
    b["features"] = json::array();
    for (const auto& f : bus.features) {
      if (f.kind == Feature::Kind::Constant)
        b["features"].push_back({{"kind", "constant"}});
      else
        b["features"].push_back({{"kind", "sine"}, {"eta", f.eta}});
    }
    b["coefficients"] = std::vector<double>(
        bus.coefficients.data(), bus.coefficients.data() + bus.coefficients.size());
    j["basis"].push_back(std::move(b));
  }
  return j.dump(2);
}

void write_trajectory(const Trajectory& traj,
                      const std::filesystem::path& csv_path) {
  {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("cannot write " + csv_path.string());
    out << trajectory_csv(traj);
  }
  auto meta = csv_path;
  meta.replace_extension(".json");
  std::ofstream out(meta);
  if (!out) throw std::runtime_error("cannot write " + meta.string());
  out << trajectory_metadata_json(traj) << '\n';
}

}  // namespace swingfreq
