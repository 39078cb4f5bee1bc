#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctr/bvp.hpp"
#include "ctr/dataset.hpp"
#include "ctr/eval.hpp"
#include "ctr/robot_config.hpp"
#include "ctr/training.hpp"

using namespace ctr;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

enum Exit { kOk = 0, kInputError = 2, kConvergenceFailure = 3, kNumericalFailure = 4 };

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConvergenceFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string robot = "robots/table1.yaml";
  int threads = 1;
  bool allow_mismatch = false;
};

RobotSpec load_robot_checked(const Common& c) {
  try {
    return load_robot(c.robot);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
}

json run_metadata(const std::string& command, const RobotSpec& robot, json config) {
  return {{"command", command},
          {"version", kVersion},
          {"robot_hash", robot_hash(robot)},
          {"config", std::move(config)}};
}

ActuationDomain domain_with(double alpha_limit) {
  ActuationDomain d;
  d.alpha_limit = alpha_limit;
  return d;
}

json domain_json(const ActuationDomain& d) {
  return {{"beta3_min", d.beta3_min},
          {"beta2_span", d.beta2_span},
          {"beta1_span", d.beta1_span},
          {"alpha_limit", d.alpha_limit}};
}

void check_hash(const std::string& what, const std::string& hash, const RobotSpec& robot,
                bool allow) {
  if (hash.empty() || hash == robot_hash(robot)) return;
  std::cerr << "warning: " << what << " was built for a different robot (hash " << hash << ")\n";
  if (!allow) throw InputError("robot hash mismatch; pass --allow-robot-mismatch to proceed");
}

Actuation parse_actuation(const std::vector<double>& v) {
  if (v.size() != 6) throw InputError("actuation needs 6 numbers: beta1 beta2 beta3 alpha1 alpha2 alpha3");
  return Actuation::from_array(std::span<const double, 6>(v.data(), 6));
}

Network load_weights_checked(const std::string& path, const RobotSpec& robot, bool allow) {
  Network net = [&] {
    try {
      return load_network(path);
    } catch (const std::exception& e) {
      throw InputError(e.what());
    }
  }();
  check_hash("weight file " + path, net.robot_hash, robot, allow);
  return net;
}

Dataset load_dataset_checked(const std::string& path, const RobotSpec& robot, bool allow) {
  Dataset d = [&] {
    try {
      return load_dataset(path);
    } catch (const std::exception& e) {
      throw InputError(e.what());
    }
  }();
  check_hash("dataset " + path, d.metadata.value("robot_hash", std::string{}), robot, allow);
  return d;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

struct SolveArgs {
  std::vector<double> act;
  std::string out;
  double tol = 1e-10;
  int max_iter = 100;
  double step = 0.0;
};

int cmd_solve(const Common& c, const SolveArgs& a) {
  const RobotSpec robot = load_robot_checked(c);
  const Actuation act = parse_actuation(a.act);
  const ActuationDomain domain;
  if (auto v = domain.violation(act)) throw InputError("actuation outside the domain: " + *v);
  SolverOptions opts;
  opts.tol = a.tol;
  opts.max_iter = a.max_iter;
  opts.step = a.step;
  const BackboneSolution sol = solve(robot, act, opts);

  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out);
    if (!file) throw InputError("cannot write " + a.out);
  }
  std::ostream& out = a.out.empty() ? std::cout : file;
  out << "# meta "
      << run_metadata("solve", robot,
                      {{"actuation", act.to_array()},
                       {"tol", a.tol},
                       {"max_iter", a.max_iter},
                       {"step", a.step}})
             .dump()
      << '\n';
  write_backbone(out, sol, a.tol, robot_hash(robot));
  std::cerr << (sol.converged ? "converged" : "did not converge") << " after " << sol.iterations
            << " iterations, residual " << sol.residual.lpNorm<Eigen::Infinity>() << '\n';
  if (!sol.converged) throw ConvergenceFailure("shooting did not converge");
  return kOk;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  int n = 334;
  std::uint64_t seed = 1;
  double alpha_limit = std::numbers::pi;
  std::string out;
};

int cmd_gen_data(const Common& c, const GenArgs& a) {
  const RobotSpec robot = load_robot_checked(c);
  const ActuationDomain domain = domain_with(a.alpha_limit);
  if (a.n <= 0) throw InputError("--n must be positive");
  std::mt19937_64 rng(a.seed);
  GenerationOptions opts;
  opts.threads = c.threads;
  GenerationReport report;
  Dataset data;
  try {
    data = generate_synthetic(a.n, rng, robot, domain, opts, &report);
  } catch (const DataError& e) {
    for (const auto& s : report.skipped) std::cerr << s << '\n';
    throw ConvergenceFailure(e.what());
  }
  for (const auto& s : report.skipped) std::cerr << s << '\n';
  const json gen = data.metadata["generator"];
  data.metadata = run_metadata("gen-data", robot,
                               {{"n", a.n}, {"seed", a.seed}, {"domain", domain_json(domain)}});
  data.metadata["seed"] = a.seed;
  data.metadata["generator"] = gen;
  save_dataset(data, a.out);
  std::cerr << data.records.size() << " records from " << report.converged << " of " << a.n
            << " actuations\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string stage = "synthetic";
  std::vector<std::string> data;
  std::string weights_in;
  std::string out = "pinn.json";
  std::string log;
  std::string checkpoint;
  bool resume = false;
  bool replace = false;
  int iterations = 1000;
  int collocation = kDefaultCollocation;
  int boundary = kDefaultBoundary;
  std::uint64_t seed = 1;
  double alpha_limit = std::numbers::pi;
  int checkpoint_every = 100;
  std::vector<double> lambda_ode, lambda_bc;
  double lambda_obs = -1.0;
  std::string norm;
};

int cmd_train(const Common& c, const TrainArgs& a) {
  const RobotSpec robot = load_robot_checked(c);
  TrainingConfig cfg;
  try {
    cfg.stage = stage_from_string(a.stage);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  cfg.n_collocation = a.collocation;
  cfg.n_boundary = a.boundary;
  cfg.seed = a.seed;
  cfg.domain = domain_with(a.alpha_limit);
  cfg.lbfgs.max_iterations = a.iterations;
  cfg.threads = c.threads;
  cfg.checkpoint_every = a.checkpoint_every;
  cfg.augment = !a.replace;
  auto set_weights = [](const std::vector<double>& v, std::array<double, kNumGroups>& w) {
    if (v.empty()) return;
    if (v.size() != kNumGroups) throw InputError("loss weights need 5 values (m u theta p h)");
    std::copy(v.begin(), v.end(), w.begin());
  };
  set_weights(a.lambda_ode, cfg.weights.ode);
  set_weights(a.lambda_bc, cfg.weights.bc);
  if (a.lambda_obs >= 0.0) cfg.weights.obs = a.lambda_obs;
  if (!a.norm.empty()) cfg.norm = loss_norm_from_string(a.norm);

  std::vector<ObservationRecord> obs;
  for (const auto& path : a.data) {
    const Dataset d = load_dataset_checked(path, robot, c.allow_mismatch);
    for (const auto& r : d.records) {
      if (cfg.stage == Stage::experimental && a.replace && r.source == Source::synthetic) continue;
      obs.push_back(r);
    }
  }
  if (cfg.stage == Stage::experimental &&
      std::none_of(obs.begin(), obs.end(),
                   [](const ObservationRecord& r) { return r.source == Source::experimental; }))
    throw InputError("stage 2 needs at least one experimental dataset (--data)");

  std::optional<Network> initial;
  if (!a.weights_in.empty()) initial = load_weights_checked(a.weights_in, robot, c.allow_mismatch);
  if (cfg.stage == Stage::experimental && !initial)
    throw InputError("stage 2 needs the stage-1 weights (--weights-in)");

  TrainingPaths paths;
  paths.weights_out = a.out;
  paths.log = a.log.empty() ? a.out + ".log.tsv" : a.log;
  paths.checkpoint = a.checkpoint.empty() ? a.out + ".ckpt" : a.checkpoint;

  const TrainingResult r = train(robot, cfg, obs, initial ? &*initial : nullptr, paths, a.resume,
                                 [](const IterationRecord& rec) {
                                   if (rec.iteration % 100 == 0)
                                     std::cerr << "iteration " << rec.iteration << " loss "
                                               << rec.loss << '\n';
                                 });
  write_json(a.out + ".meta.json",
             run_metadata("train", robot,
                          {{"training", cfg.to_json()},
                           {"data", a.data},
                           {"observations", obs.size()},
                           {"weights_in", a.weights_in},
                           {"resumed", r.resumed}}));
  std::cerr << "stopped after " << r.state.iteration << " iterations ("
            << to_string(r.stop) << "), loss " << r.state.f << '\n';
  return kOk;
}


// ---------------------------------------------------------------------------

struct IngestArgs {
  std::string file;
  std::string map;
  std::string out;
  std::string report;
  long sample_size = 0;
  std::uint64_t seed = 1;
};

int cmd_ingest(const Common& c, const IngestArgs& a) {
  const RobotSpec robot = load_robot_checked(c);
  const ColumnMap map = load_column_map(a.map);
  std::ifstream in(a.file);
  if (!in) throw InputError("cannot open " + a.file);
  IngestOptions opts;
  opts.sample_size = a.sample_size;
  opts.seed = a.seed;
  IngestReport report;
  auto write_report = [&] {
    const std::string path = a.report.empty() ? a.out + ".report.txt" : a.report;
    std::ofstream r(path);
    if (!r) throw InputError("cannot write " + path);
    report.write(r);
  };
  Dataset data;
  try {
    data = ingest_experimental(in, map, robot, ActuationDomain{}, opts, report);
  } catch (const DataError&) {
    write_report();
    throw;
  }
  write_report();
  const json ingest = data.metadata["ingest"];
  data.metadata = run_metadata("ingest", robot,
                               {{"file", a.file},
                                {"map", a.map},
                                {"sample_size", a.sample_size},
                                {"seed", a.seed}});
  data.metadata["seed"] = a.seed;
  data.metadata["ingest"] = ingest;
  save_dataset(data, a.out);
  std::cerr << report.kept << " records kept of " << report.rows << " rows ("
            << report.malformed.size() << " malformed, " << report.rejected.size()
            << " rejected)\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string weights;
  int n = 100;
  std::uint64_t seed = 2024;
  int grid = 50;
  double alpha_limit = -1.0;
  std::vector<std::string> data;
  double outlier_k = 10.0;
  int states = 10;
  std::string out_dir = "eval";
};

int cmd_evaluate(const Common& c, const EvalArgs& a) {
  const RobotSpec robot = load_robot_checked(c);
  const Network net = load_weights_checked(a.weights, robot, c.allow_mismatch);
  ActuationDomain domain = net.domain;
  if (a.alpha_limit > 0.0) domain.alpha_limit = a.alpha_limit;
  std::filesystem::create_directories(a.out_dir);
  const std::filesystem::path dir(a.out_dir);
  const SolverOptions solver;

  const auto acts = sample_actuations(a.n, a.seed, domain);
  const ShapeErrorReport shape = backbone_error(shape_model(net), robot, solver, acts, a.grid, c.threads);
  {
    std::ofstream t(dir / "backbone_error.csv");
    shape.write_table(t);
  }
  json summary = {{"meta", run_metadata("evaluate", robot,
                                        {{"weights", a.weights},
                                         {"n", a.n},
                                         {"seed", a.seed},
                                         {"grid", a.grid},
                                         {"domain", domain_json(domain)},
                                         {"data", a.data},
                                         {"outlier_k", a.outlier_k},
                                         {"states", a.states}})},
                  {"backbone_error", shape.to_json()}};

  json states = json::array();
  const auto state_acts = sample_actuations(a.states, a.seed + 1, domain);
  for (std::size_t i = 0; i < state_acts.size(); ++i) {
    const StateRecoveryReport r = state_recovery(net, robot, solver, state_acts[i]);
    std::ofstream t(dir / ("states_" + std::to_string(i) + ".csv"));
    r.write_table(t);
    states.push_back(r.to_json());
  }
  summary["state_recovery"] = states;

  if (!a.data.empty()) {
    std::vector<ObservationRecord> records;
    for (const auto& p : a.data) {
      const Dataset d = load_dataset_checked(p, robot, c.allow_mismatch);
      records.insert(records.end(), d.records.begin(), d.records.end());
    }
    const ScreenResult screen = outlier_screen(records, robot, solver, a.outlier_k, c.threads);
    const TipErrorReport tips = tip_error(shape_model(net), screen.clean);
    summary["tip_error"] = tips.to_json();
    summary["outliers"] = {{"flagged", screen.flagged.size()},
                           {"median_deviation", screen.median},
                           {"unsolved", screen.unsolved}};
  }
  write_json((dir / "summary.json").string(), summary);
  std::cerr << "backbone error over " << shape.acts.size() << " actuations: mean "
            << shape.overall.mean << ", max " << shape.overall.max << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string weights;
  int n = 5000;
  std::vector<int> discretizations = kDefaultDiscretizations;
  int warmup = 100;
  int repeats = 5;
  std::uint64_t seed = 7;
  std::string out_dir = "bench";
};

int cmd_benchmark(const Common& c, const BenchArgs& a) {
  const RobotSpec robot = load_robot_checked(c);
  const Network net = load_weights_checked(a.weights, robot, c.allow_mismatch);
  if (a.warmup < 100) std::cerr << "warning: fewer than 100 warm-up evaluations\n";
  const RuntimeReport rep = runtime_bench(net, robot, a.n, a.discretizations, a.seed, net.domain, a.warmup,
                                          a.repeats);
  std::filesystem::create_directories(a.out_dir);
  const std::filesystem::path dir(a.out_dir);
  {
    std::ofstream t(dir / "runtime.csv");
    rep.write_table(t);
  }
  write_json((dir / "runtime.json").string(),
             {{"meta", run_metadata("benchmark", robot,
                                    {{"weights", a.weights},
                                     {"n", a.n},
                                     {"discretizations", a.discretizations},
                                     {"warmup", a.warmup},
                                     {"repeats", a.repeats},
                                     {"seed", a.seed},
                                     {"threads", 1}})},
              {"runtime", rep.to_json()}});
  for (const auto& e : rep.entries)
    std::cerr << "n=" << e.discretization << " pinn median " << e.pinn_summary.median
              << " s, solver median " << e.solver_summary.median << " s\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct ExportArgs {
  std::string weights;
  std::vector<double> act;
  int points = 200;
  std::string out;
};

int cmd_export_shape(const Common& c, const ExportArgs& a) {
  const RobotSpec robot = load_robot_checked(c);
  const Network net = load_weights_checked(a.weights, robot, c.allow_mismatch);
  const Actuation act = parse_actuation(a.act);
  if (auto v = ActuationDomain{}.violation(act)) throw InputError("actuation outside the domain: " + *v);
  if (a.points < 2) throw InputError("--points must be at least 2");
  const SegmentLayout layout = segment_layout(robot, act);
  std::vector<double> s;
  for (int k = 0; k < a.points; ++k) s.push_back(layout.distal[0] * k / (a.points - 1));
  const Eigen::MatrixXd x = net.evaluate_backbone(act, s);

  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out);
    if (!file) throw InputError("cannot write " + a.out);
  }
  std::ostream& out = a.out.empty() ? std::cout : file;
  out << "# meta "
      << run_metadata("export-shape", robot,
                      {{"weights", a.weights}, {"actuation", act.to_array()}, {"points", a.points}})
             .dump()
      << '\n';
  out << "# units: s [m], p [m], h [-], theta [rad], uz [1/m], m [N m]\n";
  out << "s,px,py,pz,hw,hx,hy,hz,theta1,theta2,theta3,uz1,uz2,uz3,mx,my\n";
  const std::array<int, kStateDim> order{idx::p, idx::p + 1, idx::p + 2, idx::h, idx::h + 1,
                                         idx::h + 2, idx::h + 3, idx::theta, idx::theta + 1,
                                         idx::theta + 2, idx::uz, idx::uz + 1, idx::uz + 2,
                                         idx::m, idx::m + 1};
  char buf[32];
  for (std::size_t k = 0; k < s.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g", s[k]);
    out << buf;
    for (int i : order) {
      std::snprintf(buf, sizeof buf, ",%.17g", x(i, static_cast<Eigen::Index>(k)));
      out << buf;
    }
    out << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concentric tube robot kinematics: Cosserat shooting solver and PINN"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Common common;
  if (const char* env = std::getenv("CTR_THREADS")) common.threads = std::max(1, std::atoi(env));
  app.add_option("--robot", common.robot, "Robot description (YAML)")->capture_default_str();
  app.add_option("--threads", common.threads, "Worker threads (default: $CTR_THREADS or 1)")
      ->check(CLI::PositiveNumber);
  app.add_flag("--allow-robot-mismatch", common.allow_mismatch,
               "Use weights/datasets whose robot hash differs from --robot");

  SolveArgs solve_args;
  auto* solve_cmd = app.add_subcommand("solve", "Solve the shooting problem for one actuation");
  solve_cmd->add_option("actuation", solve_args.act,
                        "beta1 beta2 beta3 [m] alpha1 alpha2 alpha3 [rad]")
      ->required()
      ->expected(6)
      ->allow_extra_args(false);
  solve_cmd->add_option("-o,--out", solve_args.out, "Backbone table (default: stdout)");
  solve_cmd->add_option("--tol", solve_args.tol, "Distal residual tolerance")->capture_default_str();
  solve_cmd->add_option("--max-iter", solve_args.max_iter, "Newton iterations")->capture_default_str();
  solve_cmd->add_option("--step", solve_args.step, "Integration step [m] (0: l1/400)");

  GenArgs gen_args;
  auto* gen_cmd = app.add_subcommand("gen-data", "Synthesize tip observations with the solver");
  gen_cmd->add_option("-n,--actuations", gen_args.n, "Random actuations (3 records each)")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen_args.seed)->capture_default_str();
  gen_cmd->add_option("--alpha-limit", gen_args.alpha_limit, "|alpha_i| bound [rad]")
      ->capture_default_str();
  gen_cmd->add_option("-o,--out", gen_args.out, "Dataset file")->required();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train the PINN with L-BFGS");
  train_cmd->add_option("--stage", train_args.stage, "synthetic | experimental")
      ->capture_default_str();
  train_cmd->add_option("--data", train_args.data, "Observation dataset(s)");
  train_cmd->add_option("--weights-in", train_args.weights_in, "Starting weights");
  train_cmd->add_option("-o,--out", train_args.out, "Weight file")->capture_default_str();
  train_cmd->add_option("--log", train_args.log, "Training log (default: <out>.log.tsv)");
  train_cmd->add_option("--checkpoint", train_args.checkpoint, "Checkpoint (default: <out>.ckpt)");
  train_cmd->add_flag("--resume", train_args.resume, "Continue from the checkpoint");
  train_cmd->add_flag("--replace", train_args.replace,
                      "Stage 2: drop synthetic observations instead of augmenting");
  train_cmd->add_option("--iterations", train_args.iterations, "L-BFGS iteration cap")
      ->capture_default_str();
  train_cmd->add_option("--collocation", train_args.collocation)->capture_default_str();
  train_cmd->add_option("--boundary", train_args.boundary)->capture_default_str();
  train_cmd->add_option("--seed", train_args.seed)->capture_default_str();
  train_cmd->add_option("--alpha-limit", train_args.alpha_limit, "|alpha_i| bound [rad]")
      ->capture_default_str();
  train_cmd->add_option("--checkpoint-every", train_args.checkpoint_every)->capture_default_str();
  train_cmd->add_option("--lambda-ode", train_args.lambda_ode, "5 weights: m u theta p h")
      ->expected(5);
  train_cmd->add_option("--lambda-bc", train_args.lambda_bc, "5 weights: m u theta p h")
      ->expected(5);
  train_cmd->add_option("--lambda-obs", train_args.lambda_obs, "Observation weight");
  train_cmd->add_option("--loss-norm", train_args.norm, "Residual norm per group (default euclidean)")
      ->check(CLI::IsMember({"euclidean", "squared"}));

  IngestArgs ingest_args;
  auto* ingest_cmd = app.add_subcommand("ingest", "Convert external tip measurements to a dataset");
  ingest_cmd->add_option("--file", ingest_args.file, "Measurement table")->required();
  ingest_cmd->add_option("--map", ingest_args.map, "Column map (YAML)")->required();
  ingest_cmd->add_option("-o,--out", ingest_args.out, "Dataset file")->required();
  ingest_cmd->add_option("--report", ingest_args.report, "Error report (default: <out>.report.txt)");
  ingest_cmd->add_option("--sample-size", ingest_args.sample_size, "Seeded subsample size (0: all)");
  ingest_cmd->add_option("--seed", ingest_args.seed)->capture_default_str();

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "Accuracy of a trained network against the solver");
  eval_cmd->add_option("--weights", eval_args.weights, "Weight file")->required();
  eval_cmd->add_option("-n,--actuations", eval_args.n, "Held-out actuations")->capture_default_str();
  eval_cmd->add_option("--seed", eval_args.seed)->capture_default_str();
  eval_cmd->add_option("--grid", eval_args.grid, "Stations along s / l1")->capture_default_str();
  eval_cmd->add_option("--alpha-limit", eval_args.alpha_limit,
                       "|alpha_i| bound [rad] (default: the network's training domain)");
  eval_cmd->add_option("--data", eval_args.data, "Observation dataset(s) for tip errors");
  eval_cmd->add_option("--outlier-k", eval_args.outlier_k)->capture_default_str();
  eval_cmd->add_option("--states", eval_args.states, "Actuations for state recovery")
      ->capture_default_str();
  eval_cmd->add_option("--out-dir", eval_args.out_dir)->capture_default_str();

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("benchmark", "Runtime distribution of network and solver");
  bench_cmd->add_option("--weights", bench_args.weights, "Weight file")->required();
  bench_cmd->add_option("-n,--actuations", bench_args.n)->capture_default_str();
  bench_cmd->add_option("--discretizations", bench_args.discretizations, "Backbone grid sizes");
  bench_cmd->add_option("--warmup", bench_args.warmup)->capture_default_str();
  bench_cmd->add_option("--repeats", bench_args.repeats, "Timed passes over the actuations; the fastest is kept")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  bench_cmd->add_option("--seed", bench_args.seed)->capture_default_str();
  bench_cmd->add_option("--out-dir", bench_args.out_dir)->capture_default_str();

  ExportArgs export_args;
  auto* export_cmd = app.add_subcommand("export-shape", "Network backbone for one actuation");
  export_cmd->add_option("--weights", export_args.weights, "Weight file")->required();
  export_cmd->add_option("actuation", export_args.act,
                         "beta1 beta2 beta3 [m] alpha1 alpha2 alpha3 [rad]")
      ->required()
      ->expected(6);
  export_cmd->add_option("--points", export_args.points)->capture_default_str();
  export_cmd->add_option("-o,--out", export_args.out, "Output table (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (*solve_cmd) return cmd_solve(common, solve_args);
    if (*gen_cmd) return cmd_gen_data(common, gen_args);
    if (*train_cmd) return cmd_train(common, train_args);
    if (*ingest_cmd) return cmd_ingest(common, ingest_args);
    if (*eval_cmd) return cmd_evaluate(common, eval_args);
    if (*bench_cmd) return cmd_benchmark(common, bench_args);
    if (*export_cmd) return cmd_export_shape(common, export_args);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const ConvergenceFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConvergenceFailure;
  } catch (const NumericalFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const IntegrationDiverged& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  }
  return kOk;
}
