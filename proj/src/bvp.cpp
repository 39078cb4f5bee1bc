#include "ctr/bvp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include <Eigen/LU>

namespace ctr {

Eigen::Matrix<double, 5, 1> ShootingGuess::to_vector() const {
  Eigen::Matrix<double, 5, 1> v;
  v << m_xy[0], m_xy[1], u_z[0], u_z[1], u_z[2];
  return v;
}

ShootingGuess ShootingGuess::from_vector(const Eigen::Matrix<double, 5, 1>& v) {
  ShootingGuess g;
  g.m_xy = {v[0], v[1]};
  g.u_z = {v[2], v[3], v[4]};
  return g;
}

RodState proximal_state(const Actuation& act, const ShootingGuess& guess) {
  RodState st;
  st.x[idx::m + 0] = guess.m_xy[0];
  st.x[idx::m + 1] = guess.m_xy[1];
  const double base = act.alpha[0] - act.beta[0] * guess.u_z[0];
  for (int i = 0; i < kNumTubes; ++i) {
    st.x[idx::uz + i] = guess.u_z[i];
    st.x[idx::theta + i] = (i == 0) ? 0.0 : act.alpha[i] - act.beta[i] * guess.u_z[i] - base;
  }
  st.x.segment<4>(idx::h) = quat_rot_z(base);
  return st;
}

namespace {

void rk4_step(StateVector& x, const SegmentProps& seg, double h) {
  StateVector k1, k2, k3, k4;
  rod_derivative(x, seg, k1);
  StateVector tmp = x + 0.5 * h * k1;
  rod_derivative(tmp, seg, k2);
  tmp = x + 0.5 * h * k2;
  rod_derivative(tmp, seg, k3);
  tmp = x + h * k3;
  rod_derivative(tmp, seg, k4);
  x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  x.segment<4>(idx::h).normalize();
}

double resolve_step(double step, const SegmentLayout& layout) {
  return step > 0.0 ? step : layout.length() / kDefaultStepsPerLength;
}

// Integrates from s = 0 to l1. `on_node` sees every grid point; `distal`
// receives u_z of each tube at its own distal boundary.
template <class OnNode>
StateVector run(const SegmentLayout& layout, const RodState& start, double step, OnNode&& on_node,
                std::array<double, kNumTubes>& distal_uz) {
  StateVector x = start.x;
  on_node(0.0, x);
  auto capture = [&](double s) {
    for (int i = 0; i < kNumTubes; ++i)
      if (std::abs(s - layout.distal[i]) <= 1e-12) distal_uz[i] = x[idx::uz + i];
  };
  for (std::size_t k = 0; k < layout.segments.size(); ++k) {
    const double a = layout.boundaries[k];
    const double b = layout.boundaries[k + 1];
    const auto n = std::max<long>(1, static_cast<long>(std::ceil((b - a) / step - 1e-9)));
    const double h = (b - a) / static_cast<double>(n);
    for (long j = 1; j <= n; ++j) {
      rk4_step(x, layout.segments[k], h);
      if (!x.allFinite()) {
        char msg[128];
        std::snprintf(msg, sizeof msg, "non-finite state at s = %.6g", a + j * h);
        throw IntegrationDiverged(msg);
      }
      on_node(j == n ? b : a + static_cast<double>(j) * h, x);
    }
    capture(b);
  }
  return x;
}

Residual endpoint_residual(const SegmentLayout& layout, const Actuation& act,
                           const ShootingGuess& guess, double step) {
  std::array<double, kNumTubes> distal_uz{};
  const StateVector tip =
      run(layout, proximal_state(act, guess), step, [](double, const StateVector&) {}, distal_uz);
  Residual r;
  r << tip[idx::m + 0], tip[idx::m + 1], distal_uz[0], distal_uz[1], distal_uz[2];
  return r;
}

}  // namespace

BackboneSolution integrate(const RobotSpec& robot, const Actuation& act,
                           const ShootingGuess& guess, double step,
                           const ActuationDomain& domain) {
  BackboneSolution sol;
  sol.act = act;
  sol.layout = segment_layout(robot, act, domain);
  sol.guess = guess;
  step = resolve_step(step, sol.layout);

  std::array<double, kNumTubes> distal_uz{};
  run(sol.layout, proximal_state(act, guess), step,
      [&](double s, const StateVector& x) {
        sol.grid.push_back(s);
        sol.states.emplace_back(x);
      },
      distal_uz);

  for (int i = 0; i < kNumTubes; ++i) {
    const double li = sol.layout.distal[i];
    auto it = std::find_if(sol.grid.begin(), sol.grid.end(),
                           [li](double g) { return std::abs(g - li) <= 1e-12; });
    sol.distal_index[i] = static_cast<std::size_t>(std::distance(sol.grid.begin(), it));
  }
  return sol;
}

Residual distal_residual(const BackboneSolution& sol) {
  Residual r;
  const RodState& tip = sol.states.back();
  r[0] = tip.m(0);
  r[1] = tip.m(1);
  for (int i = 0; i < kNumTubes; ++i) r[2 + i] = sol.states[sol.distal_index[i]].uz(i);
  return r;
}

BackboneSolution solve(const RobotSpec& robot, const Actuation& act, const SolverOptions& opts) {
  const SegmentLayout layout = segment_layout(robot, act, opts.domain);
  const double step = resolve_step(opts.step, layout);

  Eigen::Matrix<double, 5, 1> g =
      opts.initial_guess ? opts.initial_guess->to_vector() : Eigen::Matrix<double, 5, 1>::Zero();
  auto residual_of = [&](const Eigen::Matrix<double, 5, 1>& v) {
    return endpoint_residual(layout, act, ShootingGuess::from_vector(v), step);
  };

  Residual r = residual_of(g);
  int iterations = 0;
  bool converged = false;
  while (iterations < opts.max_iter) {
    ++iterations;
    if (r.lpNorm<Eigen::Infinity>() < opts.tol) {
      converged = true;
      break;
    }
    Eigen::Matrix<double, 5, 5> jac;
    for (int k = 0; k < 5; ++k) {
      Eigen::Matrix<double, 5, 1> gp = g;
      gp[k] += opts.fd_step;
      jac.col(k) = (residual_of(gp) - r) / opts.fd_step;
    }
    const Eigen::Matrix<double, 5, 1> dx = jac.fullPivLu().solve(-r);
    if (!dx.allFinite()) break;

    // Backtracking: halve until the residual norm drops.
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opts.max_halvings; ++h, t *= 0.5) {
      const Eigen::Matrix<double, 5, 1> trial = g + t * dx;
      Residual rt;
      try {
        rt = residual_of(trial);
      } catch (const IntegrationDiverged&) {
        continue;
      }
      if (rt.norm() < r.norm()) {
        g = trial;
        r = rt;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }

  BackboneSolution sol = integrate(robot, act, ShootingGuess::from_vector(g), step, opts.domain);
  sol.residual = distal_residual(sol);
  sol.iterations = iterations;
  sol.converged = converged && sol.residual.lpNorm<Eigen::Infinity>() < opts.tol;
  return sol;
}

std::pair<StateVector, StateVector> BackboneInterpolant::state_and_derivative(double s) const {
  const auto& grid = sol_->grid;
  s = std::clamp(s, grid.front(), grid.back());
  auto it = std::upper_bound(grid.begin(), grid.end(), s);
  std::size_t k = static_cast<std::size_t>(std::distance(grid.begin(), it));
  k = std::clamp<std::size_t>(k, 1, grid.size() - 1) - 1;

  const double s0 = grid[k], s1 = grid[k + 1];
  const double h = s1 - s0;
  const SegmentProps& seg = sol_->layout.props_at(0.5 * (s0 + s1));
  const StateVector& x0 = sol_->states[k].x;
  const StateVector& x1 = sol_->states[k + 1].x;
  StateVector d0, d1;
  rod_derivative(x0, seg, d0);
  rod_derivative(x1, seg, d1);

  const double t = (s - s0) / h;
  const double t2 = t * t, t3 = t2 * t;
  const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t;
  const double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
  const double dh00 = 6 * t2 - 6 * t, dh10 = 3 * t2 - 4 * t + 1;
  const double dh01 = -6 * t2 + 6 * t, dh11 = 3 * t2 - 2 * t;

  StateVector value = h00 * x0 + h10 * h * d0 + h01 * x1 + h11 * h * d1;
  StateVector deriv = (dh00 * x0 + dh01 * x1) / h + dh10 * d0 + dh11 * d1;
  return {value, deriv};
}

RodState BackboneInterpolant::state(double s) const {
  return RodState(state_and_derivative(s).first);
}

void write_backbone(std::ostream& out, const BackboneSolution& sol, double tol,
                    const std::string& robot_hash) {
  char buf[1024];
  out << "# ctr-backbone v1\n";
  out << "# robot_hash: " << robot_hash << '\n';
  const auto a = sol.act.to_array();
  std::snprintf(buf, sizeof buf,
                "# actuation: %.17g %.17g %.17g %.17g %.17g %.17g  (beta [m], alpha [rad])\n", a[0],
                a[1], a[2], a[3], a[4], a[5]);
  out << buf;
  std::snprintf(buf, sizeof buf, "# tolerance: %.17g\n# iterations: %d\n# converged: %s\n", tol,
                sol.iterations, sol.converged ? "true" : "false");
  out << buf;
  std::snprintf(buf, sizeof buf, "# residual_inf: %.17g\n",
                sol.residual.lpNorm<Eigen::Infinity>());
  out << buf;
  out << "# units: s [m], p [m], h [-], theta [rad], uz [1/m], m [N m]\n";
  out << "s,px,py,pz,hw,hx,hy,hz,theta1,theta2,theta3,uz1,uz2,uz3,mx,my\n";
  for (std::size_t k = 0; k < sol.grid.size(); ++k) {
    const StateVector& x = sol.states[k].x;
    std::snprintf(buf, sizeof buf,
                  "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                  "%.17g,%.17g,%.17g\n",
                  sol.grid[k], x[idx::p], x[idx::p + 1], x[idx::p + 2], x[idx::h], x[idx::h + 1],
                  x[idx::h + 2], x[idx::h + 3], x[idx::theta], x[idx::theta + 1],
                  x[idx::theta + 2], x[idx::uz], x[idx::uz + 1], x[idx::uz + 2], x[idx::m],
                  x[idx::m + 1]);
    out << buf;
  }
}

BackboneTable read_backbone(std::istream& in) {
  BackboneTable table;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        auto trim = [](std::string v) {
          const auto b = v.find_first_not_of(" \t");
          const auto e = v.find_last_not_of(" \t");
          return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
        };
        table.metadata.emplace_back(trim(line.substr(1, colon - 1)), trim(line.substr(colon + 1)));
      }
      continue;
    }
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::array<double, 16> v{};
    std::istringstream row(line);
    std::string cell;
    for (std::size_t c = 0; c < v.size(); ++c) {
      if (!std::getline(row, cell, ',')) throw std::runtime_error("short backbone row: " + line);
      v[c] = std::stod(cell);
    }
    RodState st;
    st.x.segment<3>(idx::p) << v[1], v[2], v[3];
    st.x.segment<4>(idx::h) << v[4], v[5], v[6], v[7];
    st.x.segment<3>(idx::theta) << v[8], v[9], v[10];
    st.x.segment<3>(idx::uz) << v[11], v[12], v[13];
    st.x.segment<2>(idx::m) << v[14], v[15];
    table.s.push_back(v[0]);
    table.states.push_back(st);
  }
  return table;
}

}  // namespace ctr
