#include "swingfreq/controllers.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace swingfreq {

using Eigen::VectorXd;
using json = nlohmann::json;

int MonotonePwlParams::segment_of(double w) const {
  return static_cast<int>(
      std::lower_bound(breakpoints.begin(), breakpoints.end(), w) -
      breakpoints.begin());
}

double MonotonePwlParams::overlap(int k, double w) const {
  const double inf = std::numeric_limits<double>::infinity();
  const int m = static_cast<int>(breakpoints.size());
  const double lo = k == 0 ? -inf : breakpoints[k - 1];
  const double hi = k == m ? inf : breakpoints[k];
  if (w >= 0.0) return std::max(0.0, std::min(hi, w) - std::max(lo, 0.0));
  return -std::max(0.0, std::min(hi, 0.0) - std::max(lo, w));
}

std::vector<double> MonotonePwlParams::uniform_grid(int segments,
                                                    double half_width) {
  std::vector<double> b;
  for (int k = 1; k < segments; ++k)
    b.push_back(-half_width + 2.0 * half_width * k / segments);
  return b;
}

double droop_u(const DroopParams& params, int bus, double omega) {
  return params.gain[bus] * omega;
}

double pwl_u(const MonotonePwlParams& params, int bus, double omega) {
  double u = 0.0;
  for (int k = 0; k < params.segments(); ++k) {
    const double o = params.overlap(k, omega);
    if (o != 0.0) u += params.slopes(bus, k) * o;
  }
  return u;
}

double adaptive_u(double base_u, const VectorXd& phi, const VectorXd& a_hat) {
  if (phi.size() != a_hat.size())
    throw std::invalid_argument("feature and estimate dimensions differ");
  return base_u + phi.dot(a_hat);
}

VectorXd adaptation_rhs(const AdaptiveParams& params, int bus, double omega,
                        const VectorXd& phi) {
  const VectorXd& a = params.diag.at(bus);
  if (a.size() != phi.size())
    throw std::invalid_argument("feature and gain dimensions differ");
  return omega * a.cwiseProduct(phi);
}

Controller Controller::droop(DroopParams p) {
  Controller c;
  c.n_ = static_cast<int>(p.gain.size());
  c.kind_ = BaseKind::Droop;
  c.droop_ = std::move(p);
  return c;
}

Controller Controller::pwl(MonotonePwlParams p) {
  Controller c;
  c.n_ = static_cast<int>(p.slopes.rows());
  c.kind_ = BaseKind::MonotonePwl;
  c.pwl_ = std::move(p);
  return c;
}

Controller Controller::linear(VectorXd gain) {
  Controller c;
  c.n_ = static_cast<int>(gain.size());
  c.kind_ = BaseKind::Linear;
  c.droop_.gain = std::move(gain);
  return c;
}

Controller Controller::with_adaptation(AdaptiveParams p,
                                       AdaptiveMode mode) const {
  Controller c = *this;
  c.adaptive_ = std::move(p);
  c.mode_ = mode;
  return c;
}

Controller Controller::with_saturation(double u_max) const {
  if (!(u_max > 0.0)) throw std::invalid_argument("saturation limit must be > 0");
  Controller c = *this;
  c.saturation_ = u_max;
  return c;
}

double Controller::base_u(int bus, double omega) const {
  switch (kind_) {
    case BaseKind::Droop:
    case BaseKind::Linear:
      return droop_u(droop_, bus, omega);
    case BaseKind::MonotonePwl:
      return pwl_u(pwl_, bus, omega);
  }
  return 0.0;
}

double Controller::base_du(int bus, double omega) const {
  switch (kind_) {
    case BaseKind::Droop:
    case BaseKind::Linear:
      return droop_.gain[bus];
    case BaseKind::MonotonePwl:
      return pwl_.slopes(bus, pwl_.segment_of(omega));
  }
  return 0.0;
}

int Controller::adaptive_dim(int bus, const BasisSignal& basis) const {
  switch (mode_) {
    case AdaptiveMode::None:
      return 0;
    case AdaptiveMode::Full:
      return basis.dim(bus);
    case AdaptiveMode::Integral:
      return 1;
  }
  return 0;
}

void Controller::features_into(int bus, const BasisSignal& basis, double t,
                               Eigen::Ref<VectorXd> out) const {
  switch (mode_) {
    case AdaptiveMode::None:
      return;
    case AdaptiveMode::Full:
      basis.features_into(bus, t, out);
      return;
    case AdaptiveMode::Integral:
      out[0] = 1.0;
      return;
  }
}

VectorXd Controller::features(int bus, const BasisSignal& basis,
                              double t) const {
  VectorXd out(adaptive_dim(bus, basis));
  features_into(bus, basis, t, out);
  return out;
}

double Controller::u(int bus, double omega,
                     const Eigen::Ref<const VectorXd>& phi,
                     const Eigen::Ref<const VectorXd>& a_hat) const {
  double v = base_u(bus, omega);
  if (is_adaptive()) v += phi.dot(a_hat);
  if (saturation_) v = std::clamp(v, -*saturation_, *saturation_);
  return v;
}

bool Controller::in_certified_class(std::string* reason) const {
  auto fail = [&](const std::string& why) {
    if (reason) *reason = why;
    return false;
  };
  if (saturation_)
    return fail("actuation saturation is enabled; the restoration certificate "
                "assumes unsaturated control");
  if (kind_ == BaseKind::Linear) {
    for (Eigen::Index i = 0; i < droop_.gain.size(); ++i)
      if (droop_.gain[i] < 0.0)
        return fail("linear gain at bus " + std::to_string(i + 1) +
                    " is negative (base controller not monotone)");
  }
  return true;
}

void Controller::validate(int n) const {
  if (n_ != n)
    throw std::invalid_argument("controller is sized for " +
                                std::to_string(n_) + " buses, network has " +
                                std::to_string(n));
  switch (kind_) {
    case BaseKind::Droop:
      for (int i = 0; i < n; ++i)
        if (!(droop_.gain[i] > 0.0))
          throw std::invalid_argument("droop gain must be positive at bus " +
                                      std::to_string(i + 1));
      break;
    case BaseKind::Linear:
      for (int i = 0; i < n; ++i)
        if (!std::isfinite(droop_.gain[i]))
          throw std::invalid_argument("non-finite gain");
      break;
    case BaseKind::MonotonePwl: {
      if (!std::is_sorted(pwl_.breakpoints.begin(), pwl_.breakpoints.end()) ||
          std::adjacent_find(pwl_.breakpoints.begin(), pwl_.breakpoints.end()) !=
              pwl_.breakpoints.end())
        throw std::invalid_argument("breakpoints must be strictly increasing");
      if (pwl_.slopes.cols() != pwl_.segments())
        throw std::invalid_argument("slope count must be breakpoints + 1");
      for (int i = 0; i < n; ++i) {
        bool any_positive = false;
        for (int k = 0; k < pwl_.segments(); ++k) {
          const double s = pwl_.slopes(i, k);
          if (!(s >= 0.0) || !std::isfinite(s))
            throw std::invalid_argument("negative slope at bus " +
                                        std::to_string(i + 1));
          any_positive |= s > 0.0;
        }
        if (!any_positive)
          throw std::invalid_argument("all slopes are zero at bus " +
                                      std::to_string(i + 1));
      }
      break;
    }
  }
  if (is_adaptive()) {
    if (static_cast<int>(adaptive_.diag.size()) != n)
      throw std::invalid_argument("adaptation gains sized for wrong bus count");
    for (int i = 0; i < n; ++i) {
      if (mode_ == AdaptiveMode::Integral && adaptive_.diag[i].size() != 1)
        throw std::invalid_argument("integral mode takes one gain per bus");
      for (Eigen::Index j = 0; j < adaptive_.diag[i].size(); ++j)
        if (!(adaptive_.diag[i][j] >= AdaptiveParams::kFloor))
          throw std::invalid_argument("adaptation gain below floor at bus " +
                                      std::to_string(i + 1));
    }
  }
}

std::string Controller::type_name() const {
  std::string base;
  switch (kind_) {
    case BaseKind::Droop: base = "droop"; break;
    case BaseKind::MonotonePwl: base = "pwl"; break;
    case BaseKind::Linear: base = "linear"; break;
  }
  switch (mode_) {
    case AdaptiveMode::None: return base;
    case AdaptiveMode::Full: return "adaptive-" + base;
    case AdaptiveMode::Integral: return "integral-" + base;
  }
  return base;
}

namespace {

json vector_json(const VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

VectorXd json_vector(const json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json base_json(const Controller& c) {
  json j;
  switch (c.base_kind()) {
    case BaseKind::Droop:
      j["type"] = "droop";
      j["gain"] = vector_json(c.droop_params().gain);
      break;
    case BaseKind::Linear:
      j["type"] = "linear";
      j["gain"] = vector_json(c.linear_gain());
      break;
    case BaseKind::MonotonePwl: {
      const auto& p = c.pwl_params();
      j["type"] = "pwl";
      j["breakpoints"] = p.breakpoints;
      j["slopes"] = json::array();
      for (Eigen::Index i = 0; i < p.slopes.rows(); ++i)
        j["slopes"].push_back(vector_json(p.slopes.row(i).transpose()));
      break;
    }
  }
  return j;
}

Controller base_from_json(const json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "droop") return Controller::droop({json_vector(j.at("gain"))});
  if (type == "linear") return Controller::linear(json_vector(j.at("gain")));
  if (type == "pwl") {
    MonotonePwlParams p;
    p.breakpoints = j.at("breakpoints").get<std::vector<double>>();
    const auto& rows = j.at("slopes");
    const auto n = static_cast<Eigen::Index>(rows.size());
    p.slopes.resize(n, static_cast<Eigen::Index>(p.breakpoints.size()) + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      VectorXd r = json_vector(rows[i]);
      if (r.size() != p.slopes.cols())
        throw std::invalid_argument("slope row has wrong length");
      p.slopes.row(i) = r.transpose();
    }
    return Controller::pwl(std::move(p));
  }
  throw std::invalid_argument("unknown base controller type '" + type + "'");
}

}  // namespace

std::string dump_controller(const Controller& c, const VectorXd* raw) {
  json j;
  if (c.is_adaptive()) {
    j["type"] = "adaptive";
    j["mode"] = c.adaptive_mode() == AdaptiveMode::Full ? "full" : "integral";
    j["base"] = base_json(c);
    j["A_diag"] = json::array();
    for (const auto& d : c.adaptive_params().diag)
      j["A_diag"].push_back(vector_json(d));
  } else {
    j = base_json(c);
  }
  if (c.saturation()) j["saturation"] = *c.saturation();
  if (raw) j["raw"] = vector_json(*raw);
  return j.dump(2);
}

Controller parse_controller(const std::string& json_text, VectorXd* raw) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("malformed controller file: ") +
                                e.what());
  }
  try {
    Controller c;
    if (j.at("type").get<std::string>() == "adaptive") {
      c = base_from_json(j.at("base"));
      const auto mode = j.at("mode").get<std::string>();
      AdaptiveParams p;
      for (const auto& d : j.at("A_diag")) p.diag.push_back(json_vector(d));
      if (mode == "full")
        c = c.with_adaptation(std::move(p), AdaptiveMode::Full);
      else if (mode == "integral")
        c = c.with_adaptation(std::move(p), AdaptiveMode::Integral);
      else
        throw std::invalid_argument("unknown adaptive mode '" + mode + "'");
    } else {
      c = base_from_json(j);
    }
    if (j.contains("saturation"))
      c = c.with_saturation(j.at("saturation").get<double>());
    if (raw) {
      *raw = j.contains("raw") ? json_vector(j.at("raw")) : VectorXd();
    }
    return c;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed controller file: ") +
                                e.what());
  }
}

}  // namespace swingfreq
