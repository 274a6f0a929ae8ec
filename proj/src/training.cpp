#include "swingfreq/training.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#ifndef SWINGFREQ_VERSION
#define SWINGFREQ_VERSION "unknown"
#endif

namespace swingfreq {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using json = nlohmann::json;

void CostSpec::validate(int n) const {
  if (!(gamma >= 0.0)) throw std::invalid_argument("gamma must be >= 0");
  if (!(T > 0.0)) throw std::invalid_argument("transient horizon must be > 0");
  if (c.size() != n) throw std::invalid_argument("cost coefficients sized wrong");
  for (Eigen::Index i = 0; i < c.size(); ++i)
    if (!(c[i] > 0.0)) throw std::invalid_argument("cost coefficients must be > 0");
}

CostSpec make_cost(int n, std::uint64_t seed, double gamma, double T) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coef(0.025, 0.075);
  CostSpec cost;
  cost.gamma = gamma;
  cost.T = T;
  cost.c.resize(n);
  for (int i = 0; i < n; ++i) cost.c[i] = coef(rng);
  return cost;
}

namespace {

Scenario draw_scenario(int n, std::mt19937_64& rng, const ScenarioOptions& opts) {
  Scenario s;
  s.split = opts.split;
  std::uniform_int_distribution<int> count(1, std::min(opts.max_buses, n));
  std::uniform_real_distribution<double> magnitude(-opts.magnitude_cap,
                                                   opts.magnitude_cap);
  std::vector<int> buses(n);
  std::iota(buses.begin(), buses.end(), 0);
  const int k = count(rng);
  for (int j = 0; j < k; ++j) {
    std::uniform_int_distribution<int> pick(j, n - 1);
    std::swap(buses[j], buses[pick(rng)]);
    s.disturbance.steps.push_back({buses[j], magnitude(rng), opts.onset});
  }
  s.basis = make_sinusoid_basis(n, rng());
  s.disturbance.seed = rng();
  s.disturbance.noise = opts.noise;
  return s;
}

}  // namespace

ScenarioSet make_scenarios(const Network& net, const VectorXd& delta_star,
                           int count, std::uint64_t seed, ScenarioOptions opts) {
  if (count < 1) throw std::invalid_argument("scenario count must be >= 1");
  ScenarioSet set;
  set.seed = seed;
  set.delta_star = delta_star;
  std::mt19937_64 rng(seed);
  for (int k = 0; k < count; ++k)
    set.scenarios.push_back(draw_scenario(net.size(), rng, opts));
  return set;
}

std::pair<ScenarioSet, ScenarioSet> make_split(const Network& net,
                                               const VectorXd& delta_star,
                                               int train_count, int test_count,
                                               std::uint64_t seed,
                                               ScenarioOptions opts) {
  ScenarioSet train, test;
  train.seed = test.seed = seed;
  train.delta_star = test.delta_star = delta_star;
  std::mt19937_64 rng(seed);
  opts.split = Scenario::Split::Train;
  for (int k = 0; k < train_count; ++k)
    train.scenarios.push_back(draw_scenario(net.size(), rng, opts));
  opts.split = Scenario::Split::Test;
  for (int k = 0; k < test_count; ++k)
    test.scenarios.push_back(draw_scenario(net.size(), rng, opts));
  return {std::move(train), std::move(test)};
}

std::uint64_t scenario_hash(const Scenario& s) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* p, std::size_t len) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  auto mixd = [&](double v) { mix(&v, sizeof v); };
  for (const auto& st : s.disturbance.steps) {
    mix(&st.bus, sizeof st.bus);
    mixd(st.magnitude);
    mixd(st.onset);
  }
  mixd(s.disturbance.noise);
  mix(&s.disturbance.seed, sizeof s.disturbance.seed);
  for (int i = 0; i < s.basis.size(); ++i) {
    for (const auto& f : s.basis.bus(i).features) mixd(f.eta);
    const auto& c = s.basis.coefficients(i);
    for (Eigen::Index j = 0; j < c.size(); ++j) mixd(c[j]);
  }
  return h;
}

double transient_loss(const Trajectory& traj, const CostSpec& cost,
                      double start) {
  const int first = traj.index_at(start);
  const long span = step_count(cost.T, traj.dt);
  const int last = first + static_cast<int>(span);
  if (last >= traj.records())
    throw std::invalid_argument("trajectory does not cover the transient window");
  const int n = traj.buses();
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    double peak = 0.0;
    double effort = 0.0;
    for (int k = first; k <= last; ++k) peak = std::max(peak, std::abs(traj.omega(k, i)));
    for (int k = first; k < last; ++k) effort += traj.u(k, i) * traj.u(k, i);
    loss += peak + cost.gamma * cost.c[i] * effort * traj.dt;
  }
  return loss;
}

double restoration_cost(const Trajectory& traj, double onset,
                        double window_begin, double window_end) {
  const double end_time = onset + window_end;
  if (traj.records() == 0 ||
      traj.t.back() + Disturbance::kOnsetSlack < end_time)
    throw std::invalid_argument("trajectory horizon is too short for the restoration window");
  const int first = traj.index_at(onset + window_begin);
  const int last = traj.index_at(end_time);
  const int n = traj.buses();
  double sum = 0.0;
  for (int k = first; k <= last; ++k)
    for (int i = 0; i < n; ++i) sum += std::abs(traj.omega(k, i));
  return sum / (static_cast<double>(last - first + 1) * n);
}

Parameterization Parameterization::of(const Controller& c) {
  Parameterization p;
  p.base_ = c.base_kind();
  p.mode_ = c.adaptive_mode();
  p.n_ = c.size();
  switch (p.base_) {
    case BaseKind::Droop:
      p.base_size_ = p.n_;
      break;
    case BaseKind::MonotonePwl:
      p.breakpoints_ = c.pwl_params().breakpoints;
      p.segments_ = c.pwl_params().segments();
      p.base_size_ = p.n_ * p.segments_;
      break;
    case BaseKind::Linear:
      throw std::invalid_argument("linear test controllers are not trainable");
  }
  if (c.is_adaptive()) {
    for (const auto& d : c.adaptive_params().diag) {
      p.a_dims_.push_back(static_cast<int>(d.size()));
      p.adaptive_size_ += static_cast<int>(d.size());
    }
  }
  return p;
}

Controller Parameterization::build(const VectorXd& raw) const {
  if (raw.size() != size()) throw std::invalid_argument("raw parameter vector sized wrong");
  Controller c;
  if (base_ == BaseKind::Droop) {
    DroopParams d;
    d.gain = raw.head(n_).unaryExpr([](double x) { return softplus(x); });
    c = Controller::droop(std::move(d));
  } else {
    MonotonePwlParams p;
    p.breakpoints = breakpoints_;
    p.slopes.resize(n_, segments_);
    for (int i = 0; i < n_; ++i)
      for (int k = 0; k < segments_; ++k) p.slopes(i, k) = softplus(raw[i * segments_ + k]);
    c = Controller::pwl(std::move(p));
  }
  if (mode_ != AdaptiveMode::None) {
    AdaptiveParams a;
    int off = base_size_;
    for (int d : a_dims_) {
      VectorXd diag(d);
      for (int j = 0; j < d; ++j) diag[j] = AdaptiveParams::kFloor + softplus(raw[off + j]);
      a.diag.push_back(std::move(diag));
      off += d;
    }
    c = c.with_adaptation(std::move(a), mode_);
  }
  return c;
}

VectorXd Parameterization::raw_of(const Controller& c) const {
  VectorXd raw(size());
  if (base_ == BaseKind::Droop) {
    for (int i = 0; i < n_; ++i) raw[i] = softplus_inverse(c.droop_params().gain[i]);
  } else {
    for (int i = 0; i < n_; ++i)
      for (int k = 0; k < segments_; ++k)
        raw[i * segments_ + k] =
            softplus_inverse(std::max(c.pwl_params().slopes(i, k), 1e-300));
  }
  int off = base_size_;
  for (std::size_t i = 0; i < a_dims_.size(); ++i) {
    for (int j = 0; j < a_dims_[i]; ++j)
      raw[off + j] = softplus_inverse(
          std::max(c.adaptive_params().diag[i][j] - AdaptiveParams::kFloor, 1e-300));
    off += a_dims_[i];
  }
  return raw;
}

VectorXd Parameterization::value_jacobian(const VectorXd& raw) const {
  return raw.unaryExpr([](double x) { return softplus_grad(x); });
}

namespace {

struct PeakSelection {
  // Per bus: either the argmax sample (hard) or softmax weights (smooth).
  std::vector<int> argmax;
  MatrixXd weights;  // records x n, smooth mode only
  double value = 0.0;
};

PeakSelection select_peaks(const Trajectory& traj, int last,
                           const LossOptions& opts) {
  const int n = traj.buses();
  PeakSelection sel;
  sel.argmax.assign(n, 0);
  if (opts.smooth_max) sel.weights = MatrixXd::Zero(last + 1, n);
  for (int i = 0; i < n; ++i) {
    double peak = -1.0;
    int arg = 0;
    for (int k = 0; k <= last; ++k) {
      const double a = std::abs(traj.omega(k, i));
      if (a > peak) {  // strict: ties go to the earliest sample
        peak = a;
        arg = k;
      }
    }
    sel.argmax[i] = arg;
    if (!opts.smooth_max) {
      sel.value += peak;
      continue;
    }
    const double tau = opts.smooth_temperature;
    double z = 0.0;
    for (int k = 0; k <= last; ++k) z += std::exp(tau * (std::abs(traj.omega(k, i)) - peak));
    sel.value += peak + std::log(z) / tau;
    for (int k = 0; k <= last; ++k)
      sel.weights(k, i) = std::exp(tau * (std::abs(traj.omega(k, i)) - peak)) / z;
  }
  return sel;
}

double sign(double x) { return (x > 0.0) - (x < 0.0); }

double loss_from(const Trajectory& traj, const CostSpec& cost,
                 const LossOptions& opts) {
  if (!opts.smooth_max) return transient_loss(traj, cost);
  const int last = static_cast<int>(step_count(cost.T, traj.dt));
  double loss = select_peaks(traj, last, opts).value;
  for (int i = 0; i < traj.buses(); ++i) {
    double effort = 0.0;
    for (int k = 0; k < last; ++k) effort += traj.u(k, i) * traj.u(k, i);
    loss += cost.gamma * cost.c[i] * effort * traj.dt;
  }
  return loss;
}

Trajectory training_rollout(const Network& net, const Controller& c,
                            const Scenario& s, const VectorXd& delta_star,
                            const CostSpec& cost, const LossOptions& opts) {
  RolloutOptions ro;
  ro.horizon = cost.T;
  ro.dt = opts.dt;
  ro.method = Integrator::Euler;
  return rollout(net, c, s.basis, s.disturbance,
                 initial_state(delta_star, c, s.basis), ro);
}

}  // namespace

double eval_loss(const Network& net, const Controller& c, const Scenario& s,
                 const VectorXd& delta_star, const CostSpec& cost,
                 const LossOptions& opts) {
  return loss_from(training_rollout(net, c, s, delta_star, cost, opts), cost, opts);
}

LossGradient grad_loss(const Network& net, const Parameterization& param,
                       const VectorXd& raw, const Scenario& scenario,
                       const VectorXd& delta_star, const CostSpec& cost,
                       const LossOptions& opts) {
  const Controller c = param.build(raw);
  const Trajectory traj = training_rollout(net, c, scenario, delta_star, cost, opts);
  const int n = net.size();
  const int last = traj.records() - 1;
  const double dt = traj.dt;
  const EstimateLayout& layout = traj.layout;
  const bool adaptive = c.is_adaptive();
  const bool pwl = c.base_kind() == BaseKind::MonotonePwl;
  const int segments = pwl ? c.pwl_params().segments() : 0;
  const int base_size = param.base_size();
  const auto& m = net.inertia();
  const auto& d = net.damping();

  LossGradient out;
  out.loss = loss_from(traj, cost, opts);
  const PeakSelection peaks = select_peaks(traj, last, opts);

  VectorXd gv = VectorXd::Zero(param.size());
  VectorXd lam_d = VectorXd::Zero(n), lam_w = VectorXd::Zero(n),
           lam_a = VectorXd::Zero(layout.total());
  VectorXd mu_d(n), mu_w(n), mu_a(layout.total()), nu(n);
  int widest = 1;
  for (int i = 0; i < n; ++i) widest = std::max(widest, layout.dim(i));
  VectorXd phi(widest);

  auto add_peak_terms = [&](int k) {
    for (int i = 0; i < n; ++i) {
      const double s = sign(traj.omega(k, i));
      if (opts.smooth_max)
        lam_w[i] += peaks.weights(k, i) * s;
      else if (peaks.argmax[i] == k)
        lam_w[i] += s;
    }
  };
  // d u_base / d theta accumulated with a weight.
  auto add_base_grad = [&](int i, double w, double weight) {
    if (weight == 0.0) return;
    if (!pwl) {
      gv[i] += weight * w;
      return;
    }
    const auto& p = c.pwl_params();
    for (int k = 0; k < segments; ++k) {
      const double o = p.overlap(k, w);
      if (o != 0.0) gv[i * segments + k] += weight * o;
    }
  };

  add_peak_terms(last);
  for (int k = last - 1; k >= 0; --k) {
    const double t = traj.t[k];
    const VectorXd delta = traj.delta.row(k).transpose();
    // Adjoint of the COI re-projection.
    lam_d.array() -= lam_d.mean();
    const double mean_ld = lam_d.mean();
    nu = dt * lam_w.cwiseQuotient(m);
    mu_d = -hessian_S_times(net, delta, nu);
    mu_w.setZero();
    mu_a.setZero();
    for (int i = 0; i < n; ++i) {
      const double w = traj.omega(k, i);
      const int la = layout.dim(i);
      const int off = layout.offset[i];
      auto ph = phi.head(la);
      double u_pre = c.base_u(i, w);
      if (adaptive) {
        c.features_into(i, scenario.basis, t, ph);
        u_pre += ph.dot(traj.a_hat.row(k).segment(off, la));
      }
      const bool saturated = c.saturation() && std::abs(u_pre) > *c.saturation();
      const double mask = saturated ? 0.0 : 1.0;
      const double du = c.base_du(i, w);

      mu_w[i] += dt * (lam_d[i] - mean_ld) - nu[i] * (d[i] + mask * du);
      add_base_grad(i, w, -nu[i] * mask);
      const double wu = 2.0 * cost.gamma * cost.c[i] * traj.u(k, i) * dt * mask;
      mu_w[i] += wu * du;
      add_base_grad(i, w, wu);
      if (adaptive) {
        const auto& gains = c.adaptive_params().diag[i];
        mu_a.segment(off, la) += (wu - nu[i] * mask) * ph;
        const auto la_i = lam_a.segment(off, la);
        mu_w[i] += dt * (la_i.array() * gains.array() * ph.array()).sum();
        gv.segment(base_size + off, la).array() += dt * la_i.array() * w * ph.array();
      }
    }
    lam_d += mu_d;
    lam_w += mu_w;
    lam_a += mu_a;
    add_peak_terms(k);
    if (!lam_w.allFinite() || !lam_d.allFinite() || !lam_a.allFinite())
      throw TrainingError("adjoint became non-finite at step " + std::to_string(k));
  }
  out.grad = gv.cwiseProduct(param.value_jacobian(raw));
  return out;
}

std::vector<GradCheckEntry> grad_check(const Network& net,
                                       const Parameterization& param,
                                       const VectorXd& raw, const Scenario& s,
                                       const VectorXd& delta_star,
                                       const CostSpec& cost,
                                       const std::vector<int>& coords,
                                       double step, const LossOptions& opts) {
  const LossGradient lg = grad_loss(net, param, raw, s, delta_star, cost, opts);
  std::vector<GradCheckEntry> out;
  for (int ci : coords) {
    VectorXd plus = raw, minus = raw;
    plus[ci] += step;
    minus[ci] -= step;
    const double fp = eval_loss(net, param.build(plus), s, delta_star, cost, opts);
    const double fm = eval_loss(net, param.build(minus), s, delta_star, cost, opts);
    GradCheckEntry e;
    e.coordinate = ci;
    e.analytic = lg.grad[ci];
    e.numeric = (fp - fm) / (2.0 * step);
    const double scale = std::max({std::abs(e.analytic), std::abs(e.numeric), 1e-8});
    e.rel_error = std::abs(e.analytic - e.numeric) / scale;
    out.push_back(e);
  }
  return out;
}

int worker_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SWINGFREQ_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

TrainReport train(const Network& net, const Controller& init,
                  const ScenarioSet& scenarios, const CostSpec& cost,
                  const TrainOptions& opts,
                  const std::optional<TrainState>& resume) {
  if (scenarios.size() == 0) throw std::invalid_argument("scenario set is empty");
  if (opts.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  cost.validate(net.size());
  const Parameterization param = Parameterization::of(init);

  TrainReport rep;
  TrainState& st = rep.state;
  if (resume) {
    st = *resume;
    if (st.raw.size() != param.size())
      throw std::invalid_argument("checkpoint does not match the controller layout");
  } else {
    st.raw = param.raw_of(init);
    st.m = VectorXd::Zero(param.size());
    st.v = VectorXd::Zero(param.size());
  }
  if (st.m.size() != param.size()) st.m = VectorXd::Zero(param.size());
  if (st.v.size() != param.size()) st.v = VectorXd::Zero(param.size());

  const int threads = worker_count(opts.threads);
  if (opts.grad_checks > 0) {
    std::vector<int> coords;
    std::mt19937_64 rng(opts.seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_int_distribution<int> pick(0, param.size() - 1);
    for (int k = 0; k < opts.grad_checks; ++k) coords.push_back(pick(rng));
    rep.grad_check_log = grad_check(net, param, st.raw, scenarios.scenarios[0],
                                    scenarios.delta_star, cost, coords, 1e-4, opts.loss);
  }

  const int count = static_cast<int>(scenarios.size());
  std::vector<int> order(count);
  std::vector<LossGradient> results;
  const int first_epoch = st.epoch;
  for (int epoch = first_epoch; epoch < first_epoch + opts.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::seed_seq seq{static_cast<std::uint32_t>(opts.seed),
                      static_cast<std::uint32_t>(opts.seed >> 32),
                      static_cast<std::uint32_t>(epoch)};
    std::mt19937_64 shuffle_rng(seq);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_sum = 0.0;
    int batches = 0;
    for (int start = 0; start < count; start += opts.batch_size) {
      const int size = std::min(opts.batch_size, count - start);
      results.assign(size, {});
      std::vector<std::string> errors(size);
      parallel_for(size, threads, [&](int b) {
        try {
          results[b] = grad_loss(net, param, st.raw,
                                 scenarios.scenarios[order[start + b]],
                                 scenarios.delta_star, cost, opts.loss);
        } catch (const std::exception& e) {
          errors[b] = e.what();
        }
      });
      double loss = 0.0;
      VectorXd grad = VectorXd::Zero(param.size());
      std::string failure;
      for (int b = 0; b < size; ++b) {  // fixed summation order
        if (!errors[b].empty()) {
          failure = errors[b];
          break;
        }
        loss += results[b].loss;
        grad += results[b].grad;
      }
      loss /= size;
      grad /= size;
      if (failure.empty() && (!std::isfinite(loss) || loss > opts.divergence_limit))
        failure = "batch loss diverged";
      if (failure.empty() && !grad.allFinite()) failure = "gradient became non-finite";
      if (!failure.empty()) {
        rep.diverged = true;
        rep.message = "epoch " + std::to_string(epoch + 1) + ": " + failure;
        rep.final_controller = param.build(st.raw);
        return rep;
      }
      epoch_sum += loss;
      ++batches;

      ++st.adam_step;
      st.m = opts.beta1 * st.m + (1.0 - opts.beta1) * grad;
      st.v = opts.beta2 * st.v + (1.0 - opts.beta2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(opts.beta1, static_cast<double>(st.adam_step));
      const double c2 = 1.0 - std::pow(opts.beta2, static_cast<double>(st.adam_step));
      st.raw.array() -= opts.lr * (st.m.array() / c1) /
                        ((st.v.array() / c2).sqrt() + opts.eps);
    }
    rep.epoch_loss.push_back(epoch_sum / batches);
    st.epoch = epoch + 1;
  }
  rep.final_controller = param.build(st.raw);
  return rep;
}

namespace {

json vec_json(const VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}
VectorXd json_vec(const json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string train_report_json(const TrainReport& rep, const TrainOptions& opts,
                              const std::string& controller_type) {
  json j;
  j["version"] = SWINGFREQ_VERSION;
  j["controller"] = controller_type;
  j["loss"] = rep.epoch_loss;
  j["diverged"] = rep.diverged;
  if (!rep.message.empty()) j["message"] = rep.message;
  j["config"] = {{"epochs", opts.epochs},
                 {"batch_size", opts.batch_size},
                 {"lr", opts.lr},
                 {"beta1", opts.beta1},
                 {"beta2", opts.beta2},
                 {"seed", opts.seed},
                 {"dt", opts.loss.dt},
                 {"smooth_max", opts.loss.smooth_max}};
  j["grad_check"] = json::array();
  for (const auto& e : rep.grad_check_log)
    j["grad_check"].push_back({{"coordinate", e.coordinate},
                               {"analytic", e.analytic},
                               {"numeric", e.numeric},
                               {"rel_error", e.rel_error}});
  return j.dump(2);
}

std::string dump_checkpoint(const Controller& c, const TrainState& st) {
  json j = json::parse(dump_controller(c, &st.raw));
  j["optimizer"] = {{"m", vec_json(st.m)},
                    {"v", vec_json(st.v)},
                    {"step", st.adam_step},
                    {"epoch", st.epoch}};
  return j.dump(2);
}

Controller parse_checkpoint(const std::string& text,
                            std::optional<TrainState>* state) {
  VectorXd raw;
  Controller c = parse_controller(text, &raw);
  if (state) {
    state->reset();
    const json j = json::parse(text);
    if (raw.size() > 0) {
      TrainState st;
      st.raw = raw;
      if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        st.m = json_vec(o.at("m"));
        st.v = json_vec(o.at("v"));
        st.adam_step = o.at("step").get<long>();
        st.epoch = o.at("epoch").get<int>();
      }
      *state = std::move(st);
    }
  }
  return c;
}

}  // namespace swingfreq
