#include "swingfreq/network.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace swingfreq {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using json = nlohmann::json;

namespace {

bool is_connected(int n, const std::vector<Line>& lines) {
  if (n <= 1) return true;
  std::vector<std::vector<int>> adj(n);
  for (const auto& l : lines) {
    adj[l.from].push_back(l.to);
    adj[l.to].push_back(l.from);
  }
  std::vector<bool> seen(n, false);
  std::vector<int> stack{0};
  seen[0] = true;
  int count = 1;
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    for (int w : adj[v]) {
      if (!seen[w]) {
        seen[w] = true;
        ++count;
        stack.push_back(w);
      }
    }
  }
  return count == n;
}

}  // namespace

Network::Network(VectorXd inertia, VectorXd damping, VectorXd p_star,
                 std::vector<Line> lines, std::vector<int> bus_ids)
    : inertia_(std::move(inertia)),
      damping_(std::move(damping)),
      p_star_(std::move(p_star)),
      lines_(std::move(lines)),
      bus_ids_(std::move(bus_ids)) {
  const int n = static_cast<int>(inertia_.size());
  if (n == 0) throw ValidationError("network has no buses");
  if (damping_.size() != n || p_star_.size() != n)
    throw ValidationError("per-bus arrays have inconsistent lengths");
  if (bus_ids_.empty()) {
    for (int i = 0; i < n; ++i) bus_ids_.push_back(i + 1);
  }
  if (static_cast<int>(bus_ids_.size()) != n)
    throw ValidationError("bus id list has wrong length");

  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(inertia_[i]) || inertia_[i] <= 0.0)
      throw ValidationError("negative inertia at bus " +
                            std::to_string(bus_ids_[i]));
    if (!std::isfinite(damping_[i]) || damping_[i] <= 0.0)
      throw ValidationError("non-positive damping at bus " +
                            std::to_string(bus_ids_[i]));
    if (!std::isfinite(p_star_[i]))
      throw ValidationError("non-finite setpoint at bus " +
                            std::to_string(bus_ids_[i]));
  }

  susceptance_ = MatrixXd::Zero(n, n);
  for (const auto& l : lines_) {
    if (l.from < 0 || l.from >= n || l.to < 0 || l.to >= n)
      throw ValidationError("line references unknown bus");
    if (l.from == l.to)
      throw ValidationError("self loop at bus " +
                            std::to_string(bus_ids_[l.from]));
    if (!std::isfinite(l.susceptance) || l.susceptance < 0.0)
      throw ValidationError("negative susceptance on line " +
                            std::to_string(bus_ids_[l.from]) + "-" +
                            std::to_string(bus_ids_[l.to]));
    if (l.susceptance == 0.0)
      throw ValidationError("zero susceptance on line " +
                            std::to_string(bus_ids_[l.from]) + "-" +
                            std::to_string(bus_ids_[l.to]));
    if (susceptance_(l.from, l.to) != 0.0)
      throw ValidationError("duplicate line " +
                            std::to_string(bus_ids_[l.from]) + "-" +
                            std::to_string(bus_ids_[l.to]));
    susceptance_(l.from, l.to) = l.susceptance;
    susceptance_(l.to, l.from) = l.susceptance;
  }
  if (!is_connected(n, lines_)) throw ValidationError("graph disconnected");
  if (std::abs(p_star_.sum()) > kBalanceTolerance) {
    std::ostringstream msg;
    msg << "unbalanced setpoints: sum(p_star) = " << p_star_.sum();
    throw ValidationError(msg.str());
  }
}

Network Network::with_setpoints(VectorXd p_star) const {
  return Network(inertia_, damping_, std::move(p_star), lines_, bus_ids_);
}

Network parse_case(const std::string& json_text, LoadOptions opts) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed case file: ") + e.what());
  }
  try {
    if (!doc.contains("buses") || !doc.contains("lines"))
      throw ParseError("case file needs 'buses' and 'lines'");
    const auto& buses = doc.at("buses");
    const int n = static_cast<int>(buses.size());
    VectorXd m(n), d(n), p(n);
    std::vector<int> ids(n);
    std::map<int, int> index_of;
    for (int i = 0; i < n; ++i) {
      const auto& b = buses[i];
      ids[i] = b.at("id").get<int>();
      if (!index_of.emplace(ids[i], i).second)
        throw ValidationError("duplicate bus id " + std::to_string(ids[i]));
      m[i] = b.at("M").get<double>();
      d[i] = b.at("D").get<double>();
      p[i] = b.at("p_star").get<double>();
    }
    std::vector<Line> lines;
    for (const auto& l : doc.at("lines")) {
      const int from = l.at("from").get<int>();
      const int to = l.at("to").get<int>();
      auto fi = index_of.find(from);
      auto ti = index_of.find(to);
      if (fi == index_of.end() || ti == index_of.end())
        throw ValidationError("line " + std::to_string(from) + "-" +
                              std::to_string(to) + " references unknown bus");
      lines.push_back({fi->second, ti->second, l.at("B").get<double>()});
    }
    if (opts.rebalance) p.array() -= p.mean();
    return Network(m, d, p, std::move(lines), std::move(ids));
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed case file: ") + e.what());
  }
}

Network load_case(const std::filesystem::path& path, LoadOptions opts) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open case file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_case(buf.str(), opts);
}

std::string dump_case(const Network& net) {
  json doc;
  doc["version"] = 1;
  doc["buses"] = json::array();
  for (int i = 0; i < net.size(); ++i) {
    doc["buses"].push_back({{"id", net.bus_ids()[i]},
                            {"M", net.inertia()[i]},
                            {"D", net.damping()[i]},
                            {"p_star", net.p_star()[i]}});
  }
  doc["lines"] = json::array();
  for (const auto& l : net.lines()) {
    doc["lines"].push_back({{"from", net.bus_ids()[l.from]},
                            {"to", net.bus_ids()[l.to]},
                            {"B", l.susceptance}});
  }
  return doc.dump(2);
}

double potential_S(const Network& net, const VectorXd& delta) {
  double s = 0.0;
  for (const auto& l : net.lines())
    s -= l.susceptance * std::cos(delta[l.from] - delta[l.to]);
  return s;
}

VectorXd grad_S(const Network& net, const VectorXd& delta) {
  VectorXd g = VectorXd::Zero(net.size());
  for (const auto& l : net.lines()) {
    const double f = l.susceptance * std::sin(delta[l.from] - delta[l.to]);
    g[l.from] += f;
    g[l.to] -= f;
  }
  return g;
}

MatrixXd hessian_S(const Network& net, const VectorXd& delta) {
  const int n = net.size();
  MatrixXd h = MatrixXd::Zero(n, n);
  for (const auto& l : net.lines()) {
    const double w = l.susceptance * std::cos(delta[l.from] - delta[l.to]);
    h(l.from, l.to) -= w;
    h(l.to, l.from) -= w;
    h(l.from, l.from) += w;
    h(l.to, l.to) += w;
  }
  return h;
}

VectorXd hessian_S_times(const Network& net, const VectorXd& delta,
                         const VectorXd& v) {
  VectorXd out = VectorXd::Zero(net.size());
  for (const auto& l : net.lines()) {
    const double w = l.susceptance * std::cos(delta[l.from] - delta[l.to]);
    const double f = w * (v[l.from] - v[l.to]);
    out[l.from] += f;
    out[l.to] -= f;
  }
  return out;
}

double max_edge_difference(const Network& net, const VectorXd& delta) {
  double worst = 0.0;
  for (const auto& l : net.lines())
    worst = std::max(worst, std::abs(delta[l.from] - delta[l.to]));
  return worst;
}

EquilibriumAngles solve_equilibrium(const Network& net,
                                    EquilibriumOptions opts) {
  return solve_equilibrium(net, VectorXd::Zero(net.size()), opts);
}

EquilibriumAngles solve_equilibrium(const Network& net,
                                    const VectorXd& initial_guess,
                                    EquilibriumOptions opts) {
  const int n = net.size();
  if (initial_guess.size() != n)
    throw std::invalid_argument("initial guess has wrong length");
  const MatrixXd gauge = MatrixXd::Constant(n, n, 1.0 / n);

  VectorXd delta = project_coi(initial_guess);
  auto residual = [&](const VectorXd& d) -> VectorXd {
    return net.p_star() - grad_S(net, d);
  };
  VectorXd r = residual(delta);
  double norm = r.lpNorm<Eigen::Infinity>();
  int it = 0;
  for (; it < opts.max_iterations && norm > opts.tolerance; ++it) {
    // The Hessian is singular along the all-ones direction; the rank-one
    // gauge term fixes it without changing the step on the COI subspace.
    MatrixXd jac = hessian_S(net, delta) + gauge;
    VectorXd step = jac.partialPivLu().solve(r);
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls) {
      VectorXd trial = project_coi(delta + alpha * step);
      VectorXd rt = residual(trial);
      const double nt = rt.lpNorm<Eigen::Infinity>();
      if (std::isfinite(nt) && nt < norm) {
        delta = std::move(trial);
        r = std::move(rt);
        norm = nt;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
  }
  if (!(norm <= opts.tolerance) && !(norm <= 1e-8)) {
    std::ostringstream msg;
    msg << "equilibrium solve did not converge after " << it
        << " iterations (residual " << norm << ")";
    throw SolverError(msg.str());
  }
  const double worst = max_edge_difference(net, delta);
  if (worst >= std::numbers::pi / 2) {
    std::ostringstream msg;
    msg << "equilibrium violates the angle-difference assumption: max edge "
           "difference "
        << worst << " rad";
    throw SolverError(msg.str());
  }
  return {delta, norm, it};
}

}  // namespace swingfreq
