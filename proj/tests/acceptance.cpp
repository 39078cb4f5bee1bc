// Acceptance suite: one PASS / FAIL / SKIP line per criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ctr/bvp.hpp"
#include "ctr/dataset.hpp"
#include "ctr/eval.hpp"
#include "ctr/pinn_loss.hpp"
#include "ctr/robot_config.hpp"
#include "ctr/sampling.hpp"
#include "ctr/training.hpp"

using namespace ctr;
namespace fs = std::filesystem;

namespace {

enum class Verdict { pass, fail, skip };

struct Outcome {
  Verdict verdict = Verdict::fail;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Options {
  fs::path weights = fs::path(CTR_SOURCE_DIR) / "models/pinn_stage1.json";
  fs::path log = fs::path(CTR_SOURCE_DIR) / "models/pinn_stage1.log.tsv";
  fs::path experimental;     // canonical dataset of measured tips
  fs::path stage2_weights;   // network trained with those measurements
  std::set<int> only;
  int threads = 1;
};

/// Tip of the arc chain bending about x for a planar actuation.
Eigen::Vector3d arc_chain_tip(const SegmentLayout& layout) {
  double phi = 0.0, y = 0.0, z = 0.0;
  for (std::size_t k = 0; k < layout.segments.size(); ++k) {
    const SegmentProps& seg = layout.segments[k];
    const double len = layout.boundaries[k + 1] - layout.boundaries[k];
    double num = 0.0, den = 0.0;
    for (int i = 0; i < kNumTubes; ++i) {
      if (!seg.present[i]) continue;
      num += seg.EI[i] * seg.kappa[i];
      den += seg.EI[i];
    }
    const double kc = num / den;
    if (kc == 0.0) {
      y -= std::sin(phi) * len;
      z += std::cos(phi) * len;
    } else {
      y += (std::cos(phi + kc * len) - std::cos(phi)) / kc;
      z += (std::sin(phi + kc * len) - std::sin(phi)) / kc;
    }
    phi += kc * len;
  }
  return {0.0, y, z};
}

// --------------------------------------------------------------------------

Outcome criterion1(const RobotSpec& robot, std::vector<BackboneSolution>& keep) {
  const auto acts = sample_actuations(500, 1001, ActuationDomain{});
  int converged = 0;
  double worst_res = 0.0, worst_shift = 0.0;
  keep.clear();
  for (const auto& a : acts) {
    BackboneSolution sol = solve(robot, a);
    SolverOptions half;
    half.step = sol.layout.length() / (2.0 * kDefaultStepsPerLength);
    const BackboneSolution fine = solve(robot, a, half);
    if (sol.converged) ++converged;
    worst_res = std::max(worst_res, sol.residual.lpNorm<Eigen::Infinity>());
    worst_shift = std::max(worst_shift, (sol.tip().p() - fine.tip().p()).norm());
    keep.push_back(std::move(sol));
  }
  const bool ok = converged == 500 && worst_res < 1e-10 && worst_shift < 1e-6;
  return {ok ? Verdict::pass : Verdict::fail,
          fmt("converged %d/500, max |residual|_inf %.3g, max tip shift under step halving %.3g m",
              converged, worst_res, worst_shift)};
}

Outcome criterion2(const RobotSpec& robot) {
  std::mt19937_64 rng(2002);
  double tip_err = 0.0, twist = 0.0;
  bool all_converged = true;
  for (int k = 0; k < 20; ++k) {
    Actuation a = sample_actuation(ActuationDomain{}, rng);
    a.alpha = {0.0, 0.0, 0.0};
    const BackboneSolution sol = solve(robot, a);
    all_converged = all_converged && sol.converged;
    tip_err = std::max(tip_err, (sol.tip().p() - arc_chain_tip(sol.layout)).norm());
    for (const RodState& st : sol.states)
      for (int i = 0; i < kNumTubes; ++i)
        twist = std::max({twist, std::abs(st.uz(i)), std::abs(st.theta(i))});
  }
  const bool ok = all_converged && tip_err < 1e-6 && twist < 1e-9;
  return {ok ? Verdict::pass : Verdict::fail,
          fmt("max tip error vs arc chain %.3g m, max |u_z|,|theta| %.3g", tip_err, twist)};
}

Network random_small_net(const RobotSpec& robot, std::mt19937_64& rng) {
  Network net = Network::for_robot(robot, ActuationDomain{}, {8, 8});
  std::normal_distribution<double> n(0.0, 0.5);
  for (Eigen::Index k = 0; k < net.num_params(); ++k) net.params()[k] = n(rng);
  return net;
}

Outcome criterion3(const RobotSpec& robot) {
  std::mt19937_64 rng(3003);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double h = 1e-6 * robot.max_length();
  double worst_ds = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Network net = random_small_net(robot, rng);
    const Actuation a = sample_actuation(ActuationDomain{}, rng);
    const double l1 = robot.max_length() + a.beta[0];
    const double s = h + (l1 - 2 * h) * u(rng);
    const auto [x, dx] = net.forward_with_s_derivative(s, a);
    const StateVector fd = (net.forward(s + h, a).x - net.forward(s - h, a).x) / (2 * h);
    worst_ds = std::max(worst_ds, (fd - dx).norm() / dx.norm());
  }

  LossContext ctx;
  ctx.scales = ResidualScales::from(robot);
  double worst_grad = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Network net = random_small_net(robot, rng);
    const auto colloc = prepare(robot, sample_collocation(10, robot, ActuationDomain{}, rng), ActuationDomain{});
    const auto bnd = prepare(robot, sample_boundary(3, ActuationDomain{}, rng), ActuationDomain{});
    ObservationSet os;
    for (int k = 0; k < 3; ++k) {
      const Actuation a = sample_actuation(ActuationDomain{}, rng);
      os.act.push_back(a);
      os.s.push_back(u(rng) * (robot.max_length() + a.beta[0]));
      os.p.push_back(Eigen::Vector3d(0.02 * u(rng), -0.02 * u(rng), 0.15 + 0.05 * u(rng)));
    }
    const auto obs = prepare(os);
    const std::array<std::function<LossValue(const Network&, Eigen::VectorXd*)>, 3> terms{
        [&](const Network& n, Eigen::VectorXd* g) { return loss_ode(n, colloc, ctx, g); },
        [&](const Network& n, Eigen::VectorXd* g) { return loss_bc(n, bnd, ctx, g); },
        [&](const Network& n, Eigen::VectorXd* g) { return loss_obs(n, obs, ctx, g); }};
    for (const auto& f : terms) {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(net.num_params());
      f(net, &g);
      const double floor = 1e-3 * g.lpNorm<Eigen::Infinity>();
      for (Eigen::Index k = 0; k < net.num_params(); ++k) {
        const double p0 = net.params()[k];
        const double step = 1e-6 * std::max(1.0, std::abs(p0));
        net.params()[k] = p0 + step;
        const double fp = f(net, nullptr).value;
        net.params()[k] = p0 - step;
        const double fm = f(net, nullptr).value;
        net.params()[k] = p0;
        const double fd = (fp - fm) / (2 * step);
        worst_grad = std::max(worst_grad, std::abs(fd - g[k]) / std::max(std::abs(g[k]), floor));
      }
    }
  }
  const bool ok = worst_ds < 1e-6 && worst_grad < 1e-4;
  return {ok ? Verdict::pass : Verdict::fail,
          fmt("max relative d/ds error %.3g (limit 1e-6), max relative gradient error %.3g (limit 1e-4)",
              worst_ds, worst_grad)};
}

/// (iteration, total) rows of a training log.
std::vector<std::pair<int, double>> read_log(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  if (line != training_log_header()) throw std::runtime_error("unexpected log header in " + p.string());
  std::vector<std::pair<int, double>> rows;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    int it = 0;
    double total = 0.0;
    ss >> it >> total;
    rows.emplace_back(it, total);
  }
  return rows;
}

Outcome criterion4(const RobotSpec& robot, const Options& opt) {
  if (!fs::exists(opt.weights)) return {Verdict::fail, "weight file missing: " + opt.weights.string()};
  const Network net = load_network(opt.weights);
  std::vector<std::string> problems;

  const auto& prov = net.provenance.empty() ? nlohmann::json::object() : net.provenance.back();
  const auto cfg = prov.contains("config") ? TrainingConfig::from_json(prov["config"]) : TrainingConfig{};
  const long n_obs = prov.value("observations", 0L);
  const int iterations = prov.value("iterations", -1);
  if (std::abs(net.domain.alpha_limit - std::numbers::pi / 3.0) > 1e-12)
    problems.push_back(fmt("alpha limit %.6g", net.domain.alpha_limit));
  if (cfg.n_collocation != 5000 || cfg.n_boundary != 500)
    problems.push_back(fmt("sample sizes %d/%d", cfg.n_collocation, cfg.n_boundary));
  if (n_obs < 500 || n_obs > 501) problems.push_back(fmt("%ld observations", n_obs));
  if (iterations < 0 || iterations > 20000) problems.push_back(fmt("%d iterations", iterations));
  if (net.robot_hash != robot_hash(robot)) problems.push_back("robot hash mismatch");

  bool monotone = fs::exists(opt.log);
  long log_rows = 0;
  if (monotone) {
    const auto rows = read_log(opt.log);
    log_rows = static_cast<long>(rows.size());
    for (std::size_t k = 1; k < rows.size(); ++k)
      monotone = monotone && rows[k].second <= rows[k - 1].second;
  }
  if (!monotone) problems.push_back("loss log missing or not monotone");

  const auto acts = sample_actuations(50, 4004, net.domain);
  const ShapeErrorReport rep =
      backbone_error(shape_model(net), robot, SolverOptions{}, acts, 50, opt.threads);
  if (!rep.excluded.empty()) problems.push_back(fmt("%zu unsolved actuations", rep.excluded.size()));
  const bool accurate = rep.overall.mean < 0.02 && rep.overall.max < 0.05;
  std::string detail = fmt("mean normalized error %.4f (limit 0.02), max %.4f (limit 0.05); "
                           "%d iterations, %d/%d/%ld samples, log rows %ld",
                           rep.overall.mean, rep.overall.max, iterations, cfg.n_collocation,
                           cfg.n_boundary, n_obs, log_rows);
  for (const auto& p : problems) detail += "; " + p;
  return {accurate && problems.empty() ? Verdict::pass : Verdict::fail, detail};
}

Outcome criterion5(const RobotSpec& robot, const Options& opt,
                   std::vector<StateRecoveryReport>& keep) {
  if (!fs::exists(opt.weights)) return {Verdict::fail, "weight file missing"};
  const Network net = load_network(opt.weights);
  const auto acts = sample_actuations(10, 5005, net.domain);
  const double m_scale = robot.characteristic_moment();
  const double u_scale = robot.max_precurvature();
  const OutputMap out = make_output_map(robot);

  std::array<double, kStateDim> worst_ratio{};
  std::array<bool, kStateDim> flat{};
  double worst_m = 0.0, worst_u = 0.0, worst_theta1 = 0.0;
  keep.clear();
  for (const auto& a : acts) {
    StateRecoveryReport rep = state_recovery(net, robot, SolverOptions{}, a);
    for (int k = 0; k < kStateDim; ++k) {
      if (k == idx::theta) continue;
      // Without external load the oracle moment vanishes identically; a state
      // that does not vary is compared against its characteristic scale.
      const bool constant = rep.range[k] <= 1e-9 * out.scale[k];
      flat[k] = flat[k] || constant;
      worst_ratio[k] = std::max(worst_ratio[k], rep.rms[k] / (constant ? out.scale[k] : rep.range[k]));
    }
    worst_m = std::max({worst_m, std::abs(rep.distal[0]) / m_scale, std::abs(rep.distal[1]) / m_scale});
    for (int i = 0; i < 3; ++i) worst_u = std::max(worst_u, std::abs(rep.distal[2 + i]) / u_scale);
    worst_theta1 = std::max(worst_theta1, rep.theta1_rms);
    keep.push_back(std::move(rep));
  }
  double worst = 0.0;
  int worst_k = 0;
  for (int k = 0; k < kStateDim; ++k)
    if (worst_ratio[k] > worst) {
      worst = worst_ratio[k];
      worst_k = k;
    }
  const bool ok = worst < 0.05 && worst_m < 0.05 && worst_u < 0.05 && worst_theta1 < 0.01;
  std::string detail = fmt("max RMS/range %.4f (state %d), |m_xy(l1)|/M %.4f, |u_iz(l_i)|/kappa_max %.4f, "
                           "theta1 RMS %.4g rad; RMS/range per state:",
                           worst, worst_k, worst_m, worst_u, worst_theta1);
  for (int k = 0; k < kStateDim; ++k)
    if (k != idx::theta) detail += fmt(flat[k] ? " %.3f*" : " %.3f", worst_ratio[k]);
  detail += " (* constant oracle state, RMS / characteristic scale)";
  return {ok ? Verdict::pass : Verdict::fail, detail};
}

Outcome criterion6(const RobotSpec& robot, const Options& opt) {
  if (opt.experimental.empty())
    return {Verdict::skip, "no experimental dataset supplied (--experimental)"};
  if (opt.stage2_weights.empty() || !fs::exists(opt.stage2_weights))
    return {Verdict::fail, "experimental dataset given without --stage2-weights"};
  const Dataset data = load_dataset(opt.experimental);
  const Network net = load_network(opt.stage2_weights);
  const ScreenResult screen = outlier_screen(data.records, robot, SolverOptions{}, 10.0, opt.threads);
  const TipErrorReport pinn = tip_error(shape_model(net), screen.clean);
  const ShapeModel cosserat = [&robot](const Actuation& a, const std::vector<double>& s) {
    const BackboneSolution sol = solve(robot, a);
    const BackboneInterpolant interp(sol);
    Eigen::Matrix3Xd out(3, static_cast<Eigen::Index>(s.size()));
    for (std::size_t k = 0; k < s.size(); ++k)
      out.col(static_cast<Eigen::Index>(k)) = interp.state(s[k]).p();
    return out;
  };
  const TipErrorReport model = tip_error(cosserat, screen.clean);
  const bool ok = pinn.norm_all.mean < 0.015 && pinn.norm_all.mean <= model.norm_all.mean;
  return {ok ? Verdict::pass : Verdict::fail,
          fmt("%zu records (%zu flagged), PINN mean normalized tip error %.4f, Cosserat %.4f",
              screen.clean.size(), screen.flagged.size(), pinn.norm_all.mean, model.norm_all.mean)};
}

Outcome criterion7(const RobotSpec& robot, const Options& opt) {
  if (!fs::exists(opt.weights)) return {Verdict::fail, "weight file missing"};
  const Network net = load_network(opt.weights);
  const RuntimeReport rep =
      runtime_bench(net, robot, 1000, kDefaultDiscretizations, 7007, net.domain, 100, 15);
  bool ok = rep.entries.size() == 4;
  std::string detail = "fastest of 15 passes per actuation";
  for (const auto& e : rep.entries) {
    const double p = e.pinn_summary.iqr() / e.pinn_summary.median;
    const double s = e.solver_summary.iqr() / e.solver_summary.median;
    ok = ok && p < 0.2 && p < s && e.pinn.size() >= 1000;
    detail += fmt("%sn=%d: PINN IQR/median %.3f (median %.3g s), solver %.3f (median %.3g s)",
                  detail.empty() ? "" : "; ", e.discretization, p, e.pinn_summary.median, s,
                  e.solver_summary.median);
  }
  return {ok ? Verdict::pass : Verdict::fail, detail};
}

Outcome criterion8(const std::vector<BackboneSolution>& sols,
                   const std::vector<StateRecoveryReport>& recoveries) {
  if (sols.empty()) return {Verdict::fail, "no oracle backbones (criterion 1 not run)"};
  double drift = 0.0;
  for (const auto& s : sols) drift = std::max(drift, max_quaternion_drift(s));

  // sign alignment: q and -q describe the same orientation
  std::mt19937_64 rng(8008);
  std::normal_distribution<double> n;
  double sign_gap = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const Eigen::Vector4d a(n(rng), n(rng), n(rng), n(rng));
    const Eigen::Vector4d b(n(rng), n(rng), n(rng), n(rng));
    sign_gap = std::max(sign_gap, std::abs(orientation_error(a, b) - orientation_error(-a, b)));
  }
  long finite = 0, total = 0;
  double max_err = 0.0;
  for (const auto& r : recoveries)
    for (double e : r.orientation_error) {
      ++total;
      if (std::isfinite(e) && e >= 0.0 && e <= std::numbers::pi) ++finite;
      max_err = std::max(max_err, e);
    }
  const bool ok = drift < 1e-9 && sign_gap < 1e-12 && total > 0 && finite == total;
  return {ok ? Verdict::pass : Verdict::fail,
          fmt("max ||h|-1| %.3g over %zu backbones; network orientation error defined at %ld/%ld "
              "points (max %.4f rad); sign symmetry gap %.3g",
              drift, sols.size(), finite, total, max_err, sign_gap)};
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  CLI::App app{"Acceptance criteria"};
  app.add_option("--weights", opt.weights, "stage-1 weight file");
  app.add_option("--log", opt.log, "stage-1 training log");
  app.add_option("--experimental", opt.experimental, "canonical dataset of measured tips");
  app.add_option("--stage2-weights", opt.stage2_weights, "network trained on the measurements");
  app.add_option("--only", opt.only, "criteria to run");
  app.add_option("--threads", opt.threads);
  CLI11_PARSE(app, argc, argv);

  const RobotSpec robot = load_robot(fs::path(CTR_SOURCE_DIR) / "robots/table1.yaml");
  std::vector<BackboneSolution> oracle;
  std::vector<StateRecoveryReport> recoveries;
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, [&] { return criterion1(robot, oracle); }},
      {2, [&] { return criterion2(robot); }},
      {3, [&] { return criterion3(robot); }},
      {4, [&] { return criterion4(robot, opt); }},
      {5, [&] { return criterion5(robot, opt, recoveries); }},
      {6, [&] { return criterion6(robot, opt); }},
      {7, [&] { return criterion7(robot, opt); }},
      {8, [&] { return criterion8(oracle, recoveries); }},
  };

  int failures = 0;
  for (const auto& [id, run] : criteria) {
    if (!opt.only.empty() && !opt.only.contains(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {Verdict::fail, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const char* tag = o.verdict == Verdict::pass ? "PASS" : o.verdict == Verdict::fail ? "FAIL" : "SKIP";
    if (o.verdict == Verdict::fail) ++failures;
    std::cout << "criterion " << id << ": " << tag << " (" << fmt("%.1f", secs) << " s) " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
