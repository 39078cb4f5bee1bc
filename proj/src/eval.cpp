#include "ctr/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

#include "ctr/parallel.hpp"
#include "ctr/sampling.hpp"

namespace ctr {

namespace {

double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

Summary summarize(std::vector<double> v) {
  Summary s;
  s.n = v.size();
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  s.min = v.front();
  s.max = v.back();
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  s.median = quantile(v, 0.5);
  s.q1 = quantile(v, 0.25);
  s.q3 = quantile(v, 0.75);
  s.p95 = quantile(v, 0.95);
  return s;
}

nlohmann::json Summary::to_json() const {
  return {{"n", n},       {"mean", mean}, {"std", std}, {"min", min}, {"max", max},
          {"median", median}, {"q1", q1}, {"q3", q3}, {"p95", p95}, {"iqr", iqr()}};
}

ShapeModel shape_model(const Network& net) {
  return [&net](const Actuation& act, const std::vector<double>& s) -> Eigen::Matrix3Xd {
    return net.evaluate_backbone(act, s).middleRows<3>(idx::p);
  };
}

std::vector<Actuation> sample_actuations(int n, std::uint64_t seed, const ActuationDomain& domain) {
  std::mt19937_64 rng(seed);
  std::vector<Actuation> acts;
  for (int i = 0; i < n; ++i) acts.push_back(sample_actuation(domain, rng));
  return acts;
}

// ---------------------------------------------------------------------------

ShapeErrorReport backbone_error(const ShapeModel& model, const RobotSpec& robot,
                                const SolverOptions& solver, const std::vector<Actuation>& acts,
                                int grid_n, int threads) {
  if (grid_n <= 0) throw std::invalid_argument("backbone_error: grid_n must be positive");
  ShapeErrorReport rep;
  for (int k = 1; k <= grid_n; ++k) rep.stations.push_back(static_cast<double>(k) / grid_n);

  std::vector<std::vector<double>> err(acts.size());
  std::vector<std::string> fail(acts.size());
  parallel_for(acts.size(), threads, [&](std::size_t i) {
    try {
      const BackboneSolution sol = solve(robot, acts[i], solver);
      if (!sol.converged) {
        fail[i] = "no convergence";
        return;
      }
      const double l1 = sol.layout.distal[0];
      std::vector<double> s;
      for (double t : rep.stations) s.push_back(t * l1);
      const Eigen::Matrix3Xd p = model(acts[i], s);
      const BackboneInterpolant oracle(sol);
      for (std::size_t k = 0; k < s.size(); ++k)
        err[i].push_back((p.col(static_cast<Eigen::Index>(k)) - oracle.state(s[k]).p()).norm() / s[k]);
    } catch (const std::exception& e) {
      fail[i] = e.what();
    }
  });

  std::vector<double> all;
  for (std::size_t i = 0; i < acts.size(); ++i) {
    if (!fail[i].empty()) {
      rep.excluded.push_back("actuation " + std::to_string(i) + ": " + fail[i]);
      continue;
    }
    rep.acts.push_back(acts[i]);
    all.insert(all.end(), err[i].begin(), err[i].end());
    rep.error.push_back(std::move(err[i]));
  }
  for (std::size_t k = 0; k < rep.stations.size(); ++k) {
    std::vector<double> col;
    for (const auto& e : rep.error) col.push_back(e[k]);
    rep.per_station.push_back(summarize(std::move(col)));
  }
  rep.overall = summarize(std::move(all));
  return rep;
}

nlohmann::json ShapeErrorReport::to_json() const {
  nlohmann::json st = nlohmann::json::array();
  for (std::size_t k = 0; k < stations.size(); ++k) {
    auto j = per_station[k].to_json();
    j["station"] = stations[k];
    st.push_back(j);
  }
  return {{"actuations", acts.size()},
          {"excluded", excluded},
          {"overall", overall.to_json()},
          {"stations", st}};
}

void ShapeErrorReport::write_table(std::ostream& out) const {
  out << "station,mean,std,min,max,median\n";
  for (std::size_t k = 0; k < stations.size(); ++k) {
    const Summary& s = per_station[k];
    out << fmt(stations[k]) << ',' << fmt(s.mean) << ',' << fmt(s.std) << ',' << fmt(s.min) << ','
        << fmt(s.max) << ',' << fmt(s.median) << '\n';
  }
}

// ---------------------------------------------------------------------------

TipErrorReport tip_error(const ShapeModel& model, const std::vector<ObservationRecord>& records,
                         int bins) {
  TipErrorReport rep;
  std::vector<double> abs_all, norm_all;
  for (const auto& r : records) {
    const Eigen::Matrix3Xd p = model(r.act, {r.s});
    const double e = (p.col(0) - r.p).norm();
    auto& t = rep.tube[static_cast<std::size_t>(r.tube - 1)];
    t.abs.push_back(e);
    t.norm.push_back(e / r.s);
    abs_all.push_back(e);
    norm_all.push_back(e / r.s);
  }
  for (auto& t : rep.tube) {
    t.abs_summary = summarize(t.abs);
    t.norm_summary = summarize(t.norm);
    const double top = t.norm.empty() ? 0.0 : t.norm_summary.max;
    const double width = top > 0.0 ? top / bins : 1.0;
    for (int b = 0; b <= bins; ++b) t.bin_edges.push_back(b * width);
    t.bin_counts.assign(static_cast<std::size_t>(bins), 0);
    for (double v : t.norm)
      ++t.bin_counts[std::min<std::size_t>(static_cast<std::size_t>(v / width),
                                           static_cast<std::size_t>(bins - 1))];
  }
  rep.abs_all = summarize(abs_all);
  rep.norm_all = summarize(norm_all);
  return rep;
}

nlohmann::json TipErrorReport::to_json() const {
  nlohmann::json tubes = nlohmann::json::array();
  for (std::size_t i = 0; i < tube.size(); ++i)
    tubes.push_back({{"tube", i + 1},
                     {"abs", tube[i].abs_summary.to_json()},
                     {"normalized", tube[i].norm_summary.to_json()},
                     {"histogram", {{"edges", tube[i].bin_edges}, {"counts", tube[i].bin_counts}}}});
  return {{"all", {{"abs", abs_all.to_json()}, {"normalized", norm_all.to_json()}}},
          {"tubes", tubes}};
}

// ---------------------------------------------------------------------------

double orientation_error(const Eigen::Vector4d& q_model, const Eigen::Vector4d& q_ref) {
  const double a = q_model.norm(), b = q_ref.norm();
  if (a < 1e-12 || b < 1e-12) return std::numeric_limits<double>::quiet_NaN();
  const double d = std::min(1.0, std::abs(q_model.dot(q_ref)) / (a * b));
  return 2.0 * std::acos(d);
}

StateRecoveryReport state_recovery(const Network& net, const RobotSpec& robot,
                                   const SolverOptions& solver, const Actuation& act,
                                   int n_points) {
  if (n_points < 2) throw std::invalid_argument("state_recovery: n_points must be at least 2");
  const BackboneSolution sol = solve(robot, act, solver);
  if (!sol.converged) throw std::runtime_error("state_recovery: oracle did not converge");
  const BackboneInterpolant oracle(sol);

  StateRecoveryReport rep;
  rep.act = act;
  const double l1 = sol.layout.distal[0];
  for (int k = 0; k < n_points; ++k) rep.s.push_back(l1 * k / (n_points - 1));
  const auto n = static_cast<Eigen::Index>(rep.s.size());
  rep.oracle.resize(kStateDim, n);
  for (Eigen::Index k = 0; k < n; ++k) rep.oracle.col(k) = oracle.state(rep.s[static_cast<std::size_t>(k)]).x;
  rep.model = net.evaluate_backbone(act, rep.s);

  for (Eigen::Index k = 0; k < n; ++k) {
    auto q = rep.model.col(k).segment<4>(idx::h);
    const Eigen::Vector4d ref = rep.oracle.col(k).segment<4>(idx::h);
    rep.orientation_error.push_back(orientation_error(q, ref));
    const double norm = q.norm();
    if (norm > 1e-12) q /= norm;
    if (q.dot(ref) < 0.0) q = -q;
  }
  for (int i = 0; i < kStateDim; ++i) {
    const Eigen::ArrayXd d = rep.model.row(i).array() - rep.oracle.row(i).array();
    rep.rms[static_cast<std::size_t>(i)] = std::sqrt(d.square().mean());
    rep.range[static_cast<std::size_t>(i)] = rep.oracle.row(i).maxCoeff() - rep.oracle.row(i).minCoeff();
  }
  rep.theta1_rms = rep.rms[idx::theta];

  const std::vector<double> ends{sol.layout.distal[0], sol.layout.distal[1], sol.layout.distal[2]};
  const Eigen::MatrixXd at = net.evaluate_backbone(act, ends);
  rep.distal = {at(idx::m, 0), at(idx::m + 1, 0), at(idx::uz, 0), at(idx::uz + 1, 1),
                at(idx::uz + 2, 2)};
  return rep;
}

namespace {
constexpr std::array<const char*, kStateDim> kStateNames{
    "mx", "my", "uz1", "uz2", "uz3", "theta1", "theta2", "theta3",
    "px", "py", "pz", "hw", "hx", "hy", "hz"};
}

nlohmann::json StateRecoveryReport::to_json() const {
  nlohmann::json states = nlohmann::json::object();
  for (int i = 0; i < kStateDim; ++i)
    states[kStateNames[static_cast<std::size_t>(i)]] = {{"rms", rms[static_cast<std::size_t>(i)]},
                                                        {"oracle_range", range[static_cast<std::size_t>(i)]}};
  return {{"actuation", act.to_array()},
          {"states", states},
          {"theta1_rms", theta1_rms},
          {"orientation_error", summarize(orientation_error).to_json()},
          {"distal", {{"mx_l1", distal[0]}, {"my_l1", distal[1]}, {"uz1_l1", distal[2]},
                      {"uz2_l2", distal[3]}, {"uz3_l3", distal[4]}}}};
}

void StateRecoveryReport::write_table(std::ostream& out) const {
  out << "s";
  for (const char* n : kStateNames) out << ',' << n << "_oracle";
  for (const char* n : kStateNames) out << ',' << n << "_pinn";
  out << ",orientation_error\n";
  for (std::size_t k = 0; k < s.size(); ++k) {
    out << fmt(s[k]);
    for (int i = 0; i < kStateDim; ++i) out << ',' << fmt(oracle(i, static_cast<Eigen::Index>(k)));
    for (int i = 0; i < kStateDim; ++i) out << ',' << fmt(model(i, static_cast<Eigen::Index>(k)));
    out << ',' << fmt(orientation_error[k]) << '\n';
  }
}

// ---------------------------------------------------------------------------

namespace {
volatile double benchmark_sink = 0.0;
}

RuntimeReport runtime_bench(const Network& net, const RobotSpec& robot, int n_acts,
                            const std::vector<int>& discretizations, std::uint64_t seed,
                            const ActuationDomain& domain, int warmup, int repeats) {
  if (n_acts <= 0) throw std::invalid_argument("runtime_bench: n_acts must be positive");
  if (repeats <= 0) throw std::invalid_argument("runtime_bench: repeats must be positive");
  using clock = std::chrono::steady_clock;
  RuntimeReport rep;
  rep.n_acts = n_acts;
  rep.warmup = warmup;
  rep.repeats = repeats;
  rep.seed = seed;
  const std::vector<Actuation> acts = sample_actuations(n_acts, seed, domain);
  const std::vector<Actuation> warm = sample_actuations(std::max(1, warmup), seed + 1, domain);

  for (int n : discretizations) {
    if (n < 2) throw std::invalid_argument("runtime_bench: discretization must be at least 2");
    RuntimeReport::Entry e;
    e.discretization = n;
    auto grid = [n](const Actuation& a, const RobotSpec& r) {
      const double l1 = r.tubes[0].length() + a.beta[0];
      std::vector<double> s(static_cast<std::size_t>(n));
      for (int k = 0; k < n; ++k) s[static_cast<std::size_t>(k)] = l1 * k / (n - 1);
      return s;
    };
    auto solve_opts = [n](const Actuation& a, const RobotSpec& r) {
      SolverOptions o;
      o.domain = ActuationDomain{};
      o.step = (r.tubes[0].length() + a.beta[0]) / n;
      return o;
    };
    double sink = 0.0;
    for (int w = 0; w < warmup; ++w) {
      const Actuation& a = warm[static_cast<std::size_t>(w) % warm.size()];
      sink += net.evaluate_backbone(a, grid(a, robot))(idx::p + 2, 0);
      sink += solve(robot, a, solve_opts(a, robot)).tip().p()[2];
    }
    // Repeated passes over all actuations, network and solver interleaved; the
    // fastest pass is kept per actuation, so slow spells of the machine are
    // discarded for both methods alike.
    const std::size_t n_a = acts.size();
    e.pinn.assign(n_a, std::numeric_limits<double>::infinity());
    e.solver.assign(n_a, std::numeric_limits<double>::infinity());
    std::vector<char> failed(n_a, 0);
    for (int r = 0; r < repeats; ++r) {
      for (std::size_t k = 0; k < n_a; ++k) {
        const Actuation& a = acts[k];
        const std::vector<double> s = grid(a, robot);
        auto t0 = clock::now();
        const Eigen::MatrixXd out = net.evaluate_backbone(a, s);
        auto t1 = clock::now();
        sink += out(idx::p + 2, out.cols() - 1);
        e.pinn[k] = std::min(e.pinn[k], std::chrono::duration<double>(t1 - t0).count());

        const SolverOptions o = solve_opts(a, robot);
        t0 = clock::now();
        const BackboneSolution sol = solve(robot, a, o);
        t1 = clock::now();
        sink += sol.tip().p()[2];
        failed[k] = failed[k] || !sol.converged;
        e.solver[k] = std::min(e.solver[k], std::chrono::duration<double>(t1 - t0).count());
      }
    }
    e.solver_failures = std::count(failed.begin(), failed.end(), 1);
    benchmark_sink = sink;
    e.pinn_summary = summarize(e.pinn);
    e.solver_summary = summarize(e.solver);
    rep.entries.push_back(std::move(e));
  }
  return rep;
}

nlohmann::json RuntimeReport::to_json() const {
  nlohmann::json entries_j = nlohmann::json::array();
  for (const auto& e : entries) {
    auto rel = [](const Summary& s) { return s.median > 0 ? s.iqr() / s.median : 0.0; };
    entries_j.push_back({{"discretization", e.discretization},
                         {"pinn", e.pinn_summary.to_json()},
                         {"solver", e.solver_summary.to_json()},
                         {"pinn_iqr_over_median", rel(e.pinn_summary)},
                         {"solver_iqr_over_median", rel(e.solver_summary)},
                         {"solver_failures", e.solver_failures}});
  }
  return {{"n_acts", n_acts}, {"warmup", warmup}, {"repeats", repeats}, {"seed", seed},
          {"entries", entries_j}};
}

void RuntimeReport::write_table(std::ostream& out) const {
  out << "discretization,method,seconds\n";
  for (const auto& e : entries) {
    for (double t : e.pinn) out << e.discretization << ",pinn," << fmt(t) << '\n';
    for (double t : e.solver) out << e.discretization << ",solver," << fmt(t) << '\n';
  }
}

double max_quaternion_drift(const BackboneSolution& sol) {
  double d = 0.0;
  for (const auto& s : sol.states) d = std::max(d, std::abs(s.h().norm() - 1.0));
  return d;
}

}  // namespace ctr
