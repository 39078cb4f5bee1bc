#include "ctr/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <Eigen/Geometry>
#include <yaml-cpp/yaml.h>

#include "ctr/parallel.hpp"

namespace ctr {

const char* to_string(Source s) { return s == Source::synthetic ? "synthetic" : "experimental"; }

ObservationSet Dataset::to_set() const {
  ObservationSet set;
  for (const auto& r : records) {
    set.s.push_back(r.s);
    set.act.push_back(r.act);
    set.p.push_back(r.p);
  }
  return set;
}

namespace {

constexpr double kLayoutTol = 1e-9;
constexpr double kReachMargin = 0.01;
constexpr const char* kMagic = "# ctr-observations v1";
constexpr const char* kColumns = "tube,s,beta1,beta2,beta3,alpha1,alpha2,alpha3,px,py,pz,source";

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '"' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool parse_double(std::string_view s, double& v) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size();
}

double distal_length(const RobotSpec& robot, const Actuation& act, int tube) {
  return robot.tubes[static_cast<std::size_t>(tube - 1)].length() +
         act.beta[static_cast<std::size_t>(tube - 1)];
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<long>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<long>(mid)));
  return m;
}

}  // namespace

std::string check_record(const ObservationRecord& r, const RobotSpec& robot,
                         const ActuationDomain& domain) {
  if (r.tube < 1 || r.tube > kNumTubes) return "tube id must be 1, 2 or 3";
  if (auto v = domain.violation(r.act)) return *v;
  if (std::abs(r.s - distal_length(robot, r.act, r.tube)) > kLayoutTol)
    return "s does not match the tube's distal end";
  if (!r.p.allFinite()) return "non-finite position";
  if (r.p.norm() > robot.max_length() + kReachMargin) return "position beyond reach of the robot";
  return {};
}

Dataset generate_synthetic(int n, std::mt19937_64& rng, const RobotSpec& robot,
                           const ActuationDomain& domain, const GenerationOptions& opts,
                           GenerationReport* report) {
  if (n <= 0) throw std::invalid_argument("generate_synthetic: n must be positive");
  std::vector<Actuation> acts;
  acts.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) acts.push_back(sample_actuation(domain, rng));

  SolverOptions so = opts.solver;
  so.domain = domain;
  std::vector<std::array<Eigen::Vector3d, kNumTubes>> tips(acts.size());
  std::vector<std::string> failure(acts.size());
  parallel_for(acts.size(), opts.threads, [&](std::size_t i) {
    try {
      const BackboneSolution sol = solve(robot, acts[i], so);
      if (!sol.converged) {
        std::ostringstream msg;
        msg << "no convergence, residual " << sol.residual.cwiseAbs().maxCoeff();
        failure[i] = msg.str();
        return;
      }
      for (int t = 0; t < kNumTubes; ++t)
        tips[i][static_cast<std::size_t>(t)] =
            sol.states[sol.distal_index[static_cast<std::size_t>(t)]].p();
    } catch (const std::exception& e) {
      failure[i] = e.what();
    }
  });

  Dataset data;
  GenerationReport rep;
  rep.requested = n;
  for (std::size_t i = 0; i < acts.size(); ++i) {
    if (!failure[i].empty()) {
      std::ostringstream msg;
      msg << "actuation " << i << " skipped: " << failure[i];
      rep.skipped.push_back(msg.str());
      continue;
    }
    ++rep.converged;
    for (int t = 1; t <= kNumTubes; ++t)
      data.records.push_back({acts[i], t, distal_length(robot, acts[i], t),
                              tips[i][static_cast<std::size_t>(t - 1)], Source::synthetic});
  }
  if (report) *report = rep;
  const double failed = static_cast<double>(rep.skipped.size()) / n;
  if (failed > opts.max_failure_fraction) {
    std::ostringstream msg;
    msg << rep.skipped.size() << " of " << n
        << " solves did not converge; check solver tolerance and step";
    throw DataError(msg.str());
  }
  data.metadata["generator"] = {{"actuations", n},
                                {"converged", rep.converged},
                                {"solver_tol", so.tol},
                                {"solver_step", so.step}};
  return data;
}

void write_dataset(std::ostream& out, const Dataset& data) {
  out << kMagic << '\n';
  out << "# meta " << data.metadata.dump() << '\n';
  out << "# units s,beta,p: m; alpha: rad\n";
  out << kColumns << '\n';
  for (const auto& r : data.records) {
    out << r.tube << ',' << fmt(r.s);
    for (double b : r.act.beta) out << ',' << fmt(b);
    for (double a : r.act.alpha) out << ',' << fmt(a);
    for (int k = 0; k < 3; ++k) out << ',' << fmt(r.p[k]);
    out << ',' << to_string(r.source) << '\n';
  }
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != kMagic)
    throw DataError("not a ctr observation file (missing header line)");
  Dataset data;
  bool have_columns = false;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view l = trim(line);
    if (l.empty()) continue;
    if (l.starts_with("# meta ")) {
      data.metadata = nlohmann::json::parse(l.substr(7));
      continue;
    }
    if (l.front() == '#') continue;
    if (!have_columns) {
      if (l != kColumns) throw DataError("unexpected column header: " + std::string(l));
      have_columns = true;
      continue;
    }
    const auto f = split(l, ',');
    ObservationRecord r;
    std::array<double, 11> v{};
    bool ok = f.size() == 12;
    for (std::size_t k = 0; ok && k < 11; ++k) ok = parse_double(f[k], v[k]);
    if (!ok) throw DataError("malformed record on line " + std::to_string(line_no));
    r.tube = static_cast<int>(v[0]);
    r.s = v[1];
    for (int k = 0; k < 3; ++k) {
      r.act.beta[static_cast<std::size_t>(k)] = v[static_cast<std::size_t>(2 + k)];
      r.act.alpha[static_cast<std::size_t>(k)] = v[static_cast<std::size_t>(5 + k)];
      r.p[k] = v[static_cast<std::size_t>(8 + k)];
    }
    if (f[11] == "synthetic") r.source = Source::synthetic;
    else if (f[11] == "experimental") r.source = Source::experimental;
    else throw DataError("unknown source tag on line " + std::to_string(line_no));
    data.records.push_back(r);
  }
  return data;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_dataset(out, data);
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  return read_dataset(in);
}

// ---------------------------------------------------------------------------

namespace {

double length_unit(const std::string& u) {
  if (u == "m") return 1.0;
  if (u == "mm") return 1e-3;
  if (u == "cm") return 1e-2;
  if (u == "um") return 1e-6;
  throw DataError("unknown length unit '" + u + "'");
}

double angle_unit(const std::string& u) {
  if (u == "rad") return 1.0;
  if (u == "deg") return std::numbers::pi / 180.0;
  throw DataError("unknown angle unit '" + u + "'");
}

ColumnSpec read_column(const YAML::Node& node, const std::string& field, double unit) {
  if (!node) throw DataError("column map: missing field '" + field + "'");
  ColumnSpec c;
  c.scale = unit;
  if (node.IsScalar()) {
    c.column = node.as<std::string>();
    return c;
  }
  if (!node["column"]) throw DataError("column map: field '" + field + "' needs a column");
  c.column = node["column"].as<std::string>();
  if (node["scale"]) c.scale = node["scale"].as<double>();
  if (node["offset"]) c.offset = node["offset"].as<double>();
  return c;
}

}  // namespace

ColumnMap parse_column_map(const std::string& yaml_text) {
  ColumnMap m;
  try {
    const YAML::Node root = YAML::Load(yaml_text);
    double len = 1.0, ang = 1.0;
    if (const auto u = root["units"]) {
      if (u["length"]) len = length_unit(u["length"].as<std::string>());
      if (u["angle"]) ang = angle_unit(u["angle"].as<std::string>());
    }
    if (root["delimiter"]) {
      const auto d = root["delimiter"].as<std::string>();
      if (d.size() != 1) throw DataError("column map: delimiter must be one character");
      m.delimiter = d[0];
    }
    const YAML::Node cols = root["columns"];
    if (!cols) throw DataError("column map: missing 'columns'");
    for (int i = 0; i < 3; ++i) {
      const std::string b = "beta" + std::to_string(i + 1);
      const std::string a = "alpha" + std::to_string(i + 1);
      m.beta[static_cast<std::size_t>(i)] = read_column(cols[b], b, len);
      m.alpha[static_cast<std::size_t>(i)] = read_column(cols[a], a, ang);
    }
    if (root["tube_column"]) m.tube_column = root["tube_column"].as<std::string>();
    const YAML::Node tips = root["tips"];
    if (!tips || !tips.IsSequence() || tips.size() == 0)
      throw DataError("column map: 'tips' must list at least one position column group");
    for (const auto& t : tips) {
      TipColumns tc;
      tc.tube = t["tube"] ? t["tube"].as<int>() : 1;
      if (m.tube_column.empty() && (tc.tube < 1 || tc.tube > 3))
        throw DataError("column map: tip tube must be 1, 2 or 3");
      const char* names[3] = {"x", "y", "z"};
      for (int k = 0; k < 3; ++k) tc.p[static_cast<std::size_t>(k)] = read_column(t[names[k]], names[k], len);
      m.tips.push_back(tc);
    }
    if (!m.tube_column.empty() && m.tips.size() != 1)
      throw DataError("column map: 'tube_column' requires exactly one tip group");
    if (root["alpha_limit"]) m.alpha_limit = root["alpha_limit"].as<double>() * ang;
    if (const auto cal = root["calibration"]) {
      if (cal["translation"]) {
        const auto t = cal["translation"].as<std::vector<double>>();
        if (t.size() != 3) throw DataError("column map: calibration translation needs 3 values");
        m.calibration.translation = Eigen::Vector3d(t[0], t[1], t[2]) * len;
      }
      if (cal["rotation_rpy"]) {
        const auto r = cal["rotation_rpy"].as<std::vector<double>>();
        if (r.size() != 3) throw DataError("column map: calibration rotation_rpy needs 3 values");
        m.calibration.rotation = (Eigen::AngleAxisd(r[2] * ang, Eigen::Vector3d::UnitZ()) *
                                  Eigen::AngleAxisd(r[1] * ang, Eigen::Vector3d::UnitY()) *
                                  Eigen::AngleAxisd(r[0] * ang, Eigen::Vector3d::UnitX()))
                                     .toRotationMatrix();
      }
    }
  } catch (const YAML::Exception& e) {
    throw DataError(std::string("column map: ") + e.what());
  }
  return m;
}

ColumnMap load_column_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open column map " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_column_map(ss.str());
}

void IngestReport::write(std::ostream& out) const {
  out << "rows " << rows << "\nkept " << kept << "\nmalformed " << malformed.size()
      << "\nrejected " << rejected.size() << '\n';
  if (subsampled_to >= 0) out << "subsampled_to " << subsampled_to << '\n';
  for (const auto& i : malformed) out << "malformed line " << i.line << ": " << i.reason << '\n';
  for (const auto& i : rejected) out << "rejected line " << i.line << ": " << i.reason << '\n';
}

Dataset ingest_experimental(std::istream& in, const ColumnMap& map, const RobotSpec& robot,
                            const ActuationDomain& domain, const IngestOptions& opts,
                            IngestReport& report) {
  report = {};
  std::string line;
  long line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view l = trim(line);
    if (l.empty() || l.front() == '#') continue;
    for (auto f : split(l, map.delimiter)) header.emplace_back(f);
    break;
  }
  if (header.empty()) throw DataError("experimental file has no header row");

  auto index_of = [&](const ColumnSpec& c) -> long {
    const auto it = std::find(header.begin(), header.end(), c.column);
    if (it == header.end()) throw DataError("column '" + c.column + "' not found in header");
    return it - header.begin();
  };
  std::array<long, 3> bi{}, ai{};
  for (int k = 0; k < 3; ++k) {
    bi[static_cast<std::size_t>(k)] = index_of(map.beta[static_cast<std::size_t>(k)]);
    ai[static_cast<std::size_t>(k)] = index_of(map.alpha[static_cast<std::size_t>(k)]);
  }
  std::vector<std::array<long, 3>> pi;
  for (const auto& t : map.tips) {
    std::array<long, 3> idx{};
    for (int k = 0; k < 3; ++k) idx[static_cast<std::size_t>(k)] = index_of(t.p[static_cast<std::size_t>(k)]);
    pi.push_back(idx);
  }
  long tube_idx = -1;
  if (!map.tube_column.empty()) tube_idx = index_of(ColumnSpec{map.tube_column});

  ActuationDomain restricted = domain;
  restricted.alpha_limit = std::min(domain.alpha_limit, map.alpha_limit);

  Dataset data;
  std::vector<long> record_line;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view l = trim(line);
    if (l.empty() || l.front() == '#') continue;
    ++report.rows;
    const auto f = split(l, map.delimiter);
    if (f.size() != header.size()) {
      report.malformed.push_back({line_no, "expected " + std::to_string(header.size()) +
                                               " fields, found " + std::to_string(f.size())});
      continue;
    }
    std::string bad;
    auto get = [&](long i, const ColumnSpec& c) {
      double v = 0.0;
      if (!parse_double(f[static_cast<std::size_t>(i)], v) && bad.empty())
        bad = "column '" + c.column + "' is not a number";
      return v * c.scale + c.offset;
    };
    Actuation act;
    for (int k = 0; k < 3; ++k) {
      act.beta[static_cast<std::size_t>(k)] = get(bi[static_cast<std::size_t>(k)], map.beta[static_cast<std::size_t>(k)]);
      act.alpha[static_cast<std::size_t>(k)] = get(ai[static_cast<std::size_t>(k)], map.alpha[static_cast<std::size_t>(k)]);
    }
    std::vector<ObservationRecord> row;
    for (std::size_t t = 0; t < map.tips.size(); ++t) {
      ObservationRecord r;
      r.act = act;
      r.source = Source::experimental;
      r.tube = map.tips[t].tube;
      if (tube_idx >= 0) {
        double tv = 0.0;
        if (!parse_double(f[static_cast<std::size_t>(tube_idx)], tv) && bad.empty())
          bad = "tube column is not a number";
        r.tube = static_cast<int>(tv);
      }
      Eigen::Vector3d p;
      for (int k = 0; k < 3; ++k) p[k] = get(pi[t][static_cast<std::size_t>(k)], map.tips[t].p[static_cast<std::size_t>(k)]);
      r.p = map.calibration.rotation * p + map.calibration.translation;
      row.push_back(r);
    }
    if (!bad.empty()) {
      report.malformed.push_back({line_no, bad});
      continue;
    }
    if (auto v = restricted.violation(act)) {
      report.rejected.push_back({line_no, *v});
      continue;
    }
    std::string why;
    for (auto& r : row) {
      if (r.tube < 1 || r.tube > 3) {
        why = "tube id must be 1, 2 or 3";
        break;
      }
      r.s = distal_length(robot, act, r.tube);
      why = check_record(r, robot, restricted);
      if (!why.empty()) break;
    }
    if (!why.empty()) {
      report.rejected.push_back({line_no, why});
      continue;
    }
    for (const auto& r : row) {
      data.records.push_back(r);
      record_line.push_back(line_no);
    }
  }

  if (report.rows > 0 &&
      static_cast<double>(report.malformed.size()) / static_cast<double>(report.rows) >
          opts.max_malformed_fraction)
    throw DataError(std::to_string(report.malformed.size()) + " of " +
                    std::to_string(report.rows) + " rows are malformed");

  if (opts.sample_size > 0 && static_cast<long>(data.records.size()) > opts.sample_size) {
    std::vector<std::size_t> order(data.records.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(opts.seed);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(static_cast<std::size_t>(opts.sample_size));
    std::sort(order.begin(), order.end());
    std::vector<ObservationRecord> kept;
    for (std::size_t i : order) kept.push_back(data.records[i]);
    data.records = std::move(kept);
    report.subsampled_to = opts.sample_size;
  }
  report.kept = static_cast<long>(data.records.size());
  data.metadata["ingest"] = {{"rows", report.rows},
                             {"kept", report.kept},
                             {"malformed", report.malformed.size()},
                             {"rejected", report.rejected.size()},
                             {"alpha_limit", restricted.alpha_limit},
                             {"sample_size", opts.sample_size},
                             {"seed", opts.seed}};
  return data;
}

ScreenResult outlier_screen(const std::vector<ObservationRecord>& records, const RobotSpec& robot,
                            const SolverOptions& solver, double k, int threads) {
  ScreenResult out;
  out.deviation.assign(records.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> fail(records.size());
  parallel_for(records.size(), threads, [&](std::size_t i) {
    const auto& r = records[i];
    try {
      const BackboneSolution sol = solve(robot, r.act, solver);
      if (!sol.converged) {
        fail[i] = "no convergence";
        return;
      }
      const auto& tip = sol.states[sol.distal_index[static_cast<std::size_t>(r.tube - 1)]];
      out.deviation[i] = (tip.p() - r.p).norm();
    } catch (const std::exception& e) {
      fail[i] = e.what();
    }
  });

  std::vector<double> finite;
  for (double d : out.deviation)
    if (std::isfinite(d)) finite.push_back(d);
  out.median = median_of(finite);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!fail[i].empty()) {
      out.unsolved.push_back("record " + std::to_string(i) + ": " + fail[i]);
      out.flagged.push_back(records[i]);
    } else if (out.deviation[i] > k * out.median) {
      out.flagged.push_back(records[i]);
    } else {
      out.clean.push_back(records[i]);
    }
  }
  return out;
}

}  // namespace ctr
