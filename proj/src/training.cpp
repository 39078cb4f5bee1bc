#include "ctr/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "ctr/robot_config.hpp"

namespace ctr {

const char* to_string(Stage s) { return s == Stage::synthetic ? "synthetic" : "experimental"; }

Stage stage_from_string(const std::string& s) {
  if (s == "synthetic" || s == "1") return Stage::synthetic;
  if (s == "experimental" || s == "2") return Stage::experimental;
  throw std::invalid_argument("unknown training stage '" + s + "'");
}

nlohmann::json TrainingConfig::to_json() const {
  return {{"stage", to_string(stage)},
          {"n_collocation", n_collocation},
          {"n_boundary", n_boundary},
          {"seed", seed},
          {"hidden", hidden},
          {"domain",
           {{"beta3_min", domain.beta3_min},
            {"beta2_span", domain.beta2_span},
            {"beta1_span", domain.beta1_span},
            {"alpha_limit", domain.alpha_limit}}},
          {"lbfgs",
           {{"history_size", lbfgs.history_size},
            {"initial_step", lbfgs.initial_step},
            {"tolerance", lbfgs.tolerance},
            {"c1", lbfgs.c1},
            {"c2", lbfgs.c2},
            {"max_line_search", lbfgs.max_line_search},
            {"max_iterations", lbfgs.max_iterations},
            {"curvature_eps", lbfgs.curvature_eps}}},
          {"weights", {{"ode", weights.ode}, {"bc", weights.bc}, {"obs", weights.obs}}},
          {"norm", to_string(norm)},
          {"threads", threads},
          {"checkpoint_every", checkpoint_every},
          {"augment", augment}};
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& j) {
  TrainingConfig c;
  c.stage = stage_from_string(j.at("stage"));
  c.n_collocation = j.at("n_collocation");
  c.n_boundary = j.at("n_boundary");
  c.seed = j.at("seed");
  c.hidden = j.at("hidden").get<std::vector<int>>();
  const auto& d = j.at("domain");
  c.domain = {d.at("beta3_min"), d.at("beta2_span"), d.at("beta1_span"), d.at("alpha_limit")};
  const auto& l = j.at("lbfgs");
  c.lbfgs.history_size = l.at("history_size");
  c.lbfgs.initial_step = l.at("initial_step");
  c.lbfgs.tolerance = l.at("tolerance");
  c.lbfgs.c1 = l.at("c1");
  c.lbfgs.c2 = l.at("c2");
  c.lbfgs.max_line_search = l.at("max_line_search");
  c.lbfgs.max_iterations = l.at("max_iterations");
  c.lbfgs.curvature_eps = l.at("curvature_eps");
  const auto& w = j.at("weights");
  c.weights.ode = w.at("ode").get<std::array<double, kNumGroups>>();
  c.weights.bc = w.at("bc").get<std::array<double, kNumGroups>>();
  c.weights.obs = w.at("obs");
  c.norm = loss_norm_from_string(j.value("norm", "euclidean"));
  c.threads = j.value("threads", 1);
  c.checkpoint_every = j.value("checkpoint_every", 100);
  c.augment = j.value("augment", true);
  return c;
}

namespace {

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json state_to_json(const LbfgsState& st) {
  nlohmann::json s_hist = nlohmann::json::array(), y_hist = nlohmann::json::array();
  for (const auto& v : st.s_hist) s_hist.push_back(to_vec(v));
  for (const auto& v : st.y_hist) y_hist.push_back(to_vec(v));
  return {{"x", to_vec(st.x)},     {"g", to_vec(st.g)},           {"f", st.f},
          {"s_hist", s_hist},      {"y_hist", y_hist},            {"iteration", st.iteration},
          {"evaluations", st.evaluations}, {"stop", static_cast<int>(st.stop)}};
}

LbfgsState state_from_json(const nlohmann::json& j) {
  LbfgsState st;
  st.x = from_vec(j.at("x").get<std::vector<double>>());
  st.g = from_vec(j.at("g").get<std::vector<double>>());
  st.f = j.at("f");
  for (const auto& v : j.at("s_hist")) st.s_hist.push_back(from_vec(v.get<std::vector<double>>()));
  for (const auto& v : j.at("y_hist")) st.y_hist.push_back(from_vec(v.get<std::vector<double>>()));
  st.iteration = j.at("iteration");
  st.evaluations = j.at("evaluations");
  st.stop = static_cast<StopReason>(j.at("stop").get<int>());
  return st;
}

/// Settings that must match for a checkpoint to be resumable.
nlohmann::json resume_key(const TrainingConfig& c) {
  nlohmann::json j = c.to_json();
  j.erase("threads");
  j.erase("checkpoint_every");
  j["lbfgs"].erase("max_iterations");
  return j;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string training_log_header() {
  return "iteration\ttotal\tode\tbc\tobs\tgrad_norm\tstep\tevaluations\twall_time";
}

namespace {

// Rows written after the last checkpoint, or duplicated by an interrupted
// writer, are dropped: the log keeps rows 0..iteration in order.
void trim_log(const std::filesystem::path& path, int iteration) {
  std::vector<std::string> kept;
  {
    std::ifstream in(path);
    std::string line;
    if (!std::getline(in, line) || line != training_log_header())
      throw std::runtime_error("training log " + path.string() + " has no header");
    kept.push_back(line);
    const auto fields = static_cast<std::ptrdiff_t>(std::count(line.begin(), line.end(), '\t'));
    int expected = 0;
    while (expected <= iteration && std::getline(in, line)) {
      if (std::count(line.begin(), line.end(), '\t') != fields) continue;
      if (line.rfind(std::to_string(expected) + '\t', 0) != 0) continue;
      kept.push_back(line);
      ++expected;
    }
    if (expected != iteration + 1)
      throw std::runtime_error("training log " + path.string() + " stops before iteration " +
                               std::to_string(iteration));
  }
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : kept) out << l << '\n';
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainingConfig& cfg,
                     const Network& net, const LbfgsState& state, double wall_time) {
  const nlohmann::json j = {{"format", "ctr-training-checkpoint"},
                            {"version", 1},
                            {"config", cfg.to_json()},
                            {"network", network_to_json(net)},
                            {"state", state_to_json(state)},
                            {"wall_time", wall_time}};
  const auto bytes = nlohmann::json::to_cbor(j);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  const auto j = nlohmann::json::from_cbor(bytes);
  if (j.value("format", "") != "ctr-training-checkpoint")
    throw std::runtime_error(path.string() + " is not a training checkpoint");
  return {TrainingConfig::from_json(j.at("config")), network_from_json(j.at("network")),
          state_from_json(j.at("state")), j.value("wall_time", 0.0)};
}

TrainingResult train(const RobotSpec& robot, const TrainingConfig& cfg,
                     const std::vector<ObservationRecord>& observations, const Network* initial,
                     const TrainingPaths& paths, bool resume,
                     const std::function<void(const IterationRecord&)>& progress) {
  cfg.lbfgs.validate();
  cfg.weights.validate();
  if (cfg.stage == Stage::experimental && !initial)
    throw std::invalid_argument("stage 2 training needs the stage-1 weights");

  std::mt19937_64 rng(cfg.seed);
  const CollocationSet colloc = sample_collocation(cfg.n_collocation, robot, cfg.domain, rng);
  const BoundarySet boundary = sample_boundary(cfg.n_boundary, cfg.domain, rng);
  Network net = initial ? *initial : Network::for_robot(robot, cfg.domain, cfg.hidden);
  if (!initial) net.initialize_xavier(rng);
  net.robot_hash = robot_hash(robot);
  net.domain = cfg.domain;

  ObservationSet obs;
  for (const auto& r : observations) {
    obs.s.push_back(r.s);
    obs.act.push_back(r.act);
    obs.p.push_back(r.p);
  }

  LossContext ctx;
  ctx.scales = ResidualScales::from(robot);
  ctx.weights = cfg.weights;
  ctx.norm = cfg.norm;
  ctx.threads = cfg.threads;
  PinnObjective objective(net, prepare(robot, colloc, cfg.domain),
                          prepare(robot, boundary, cfg.domain), prepare(obs), ctx);
  Eigen::VectorXd last_x;
  const Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    last_x = x;
    return objective(x, g);
  };

  const Lbfgs opt(cfg.lbfgs);
  TrainingResult result{net, {}, StopReason::none, false};
  LbfgsState& st = result.state;
  double wall_offset = 0.0;

  std::ofstream log;
  auto write_row = [&](int it, const LossBreakdown& b, double gnorm, double step, long evals,
                       double wall) {
    log << it << '\t' << fmt(b.total()) << '\t' << fmt(b.ode.value) << '\t' << fmt(b.bc.value)
        << '\t' << fmt(b.obs.value) << '\t' << fmt(gnorm) << '\t' << fmt(step) << '\t' << evals
        << '\t' << fmt(wall) << '\n'
        << std::flush;
  };

  if (resume && std::filesystem::exists(paths.checkpoint)) {
    Checkpoint cp = load_checkpoint(paths.checkpoint);
    if (resume_key(cp.cfg) != resume_key(cfg))
      throw std::invalid_argument("checkpoint was written with a different training configuration");
    st = std::move(cp.state);
    st.stop = StopReason::none;
    wall_offset = cp.wall_time;
    result.resumed = true;
    trim_log(paths.log, st.iteration);
    log.open(paths.log, std::ios::app);
  } else {
    st = opt.start(f, net.params());
    log.open(paths.log, std::ios::trunc);
    log << training_log_header() << '\n';
    if (!std::isfinite(st.f))
      throw NumericalFailure("initial loss is not finite");
    write_row(0, objective.last(), st.g.norm(), 0.0, 1, 0.0);
  }
  if (!log) throw std::runtime_error("cannot write training log " + paths.log.string());

  Network probe = net;
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return wall_offset + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  auto checkpoint = [&] {
    if (paths.checkpoint.empty()) return;
    probe.params() = st.x;
    save_checkpoint(paths.checkpoint, cfg, probe, st, elapsed());
  };

  IterationRecord rec;
  while (opt.iterate(f, st, rec)) {
    // The line search may have finished on a rejected trial point.
    LossBreakdown b = objective.last();
    if (last_x != st.x) {
      probe.params() = st.x;
      b = objective.evaluate(probe, nullptr);
    }
    write_row(rec.iteration, b, rec.grad_norm, rec.step, rec.evaluations, elapsed());
    if (progress) progress(rec);
    if (st.stop == StopReason::non_finite) break;
    if (cfg.checkpoint_every > 0 && st.iteration % cfg.checkpoint_every == 0) checkpoint();
  }
  if (st.stop == StopReason::non_finite)
    throw NumericalFailure("loss became non-finite at iteration " + std::to_string(st.iteration));
  checkpoint();

  result.stop = st.stop;
  result.net.params() = st.x;
  result.net.provenance.push_back({{"stage", to_string(cfg.stage)},
                                   {"config", cfg.to_json()},
                                   {"observations", observations.size()},
                                   {"iterations", st.iteration},
                                   {"evaluations", st.evaluations},
                                   {"stop", to_string(st.stop)},
                                   {"loss", st.f}});
  if (!paths.weights_out.empty()) save_network(result.net, paths.weights_out);
  return result;
}

}  // namespace ctr
