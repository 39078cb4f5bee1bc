#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "ctr/dataset.hpp"
#include "ctr/robot_config.hpp"
#include "support.hpp"

using namespace ctr;
using ctr::testing::table1;

namespace {

Dataset small_synthetic(std::uint64_t seed, int n = 12, int threads = 2) {
  std::mt19937_64 rng(seed);
  GenerationOptions opts;
  opts.threads = threads;
  return generate_synthetic(n, rng, table1(), ActuationDomain{}, opts);
}

std::string to_text(const Dataset& d) {
  std::ostringstream ss;
  write_dataset(ss, d);
  return ss.str();
}

/// Wide-format measurement table in millimetres and degrees, one row per
/// actuation with all three tips.
std::string wide_csv(const std::vector<BackboneSolution>& sols) {
  std::ostringstream out;
  out.precision(17);
  out << "# bench export\n";
  out << "b1,b2,b3,a1,a2,a3,x1,y1,z1,x2,y2,z2,x3,y3,z3\n";
  for (const auto& sol : sols) {
    for (double b : sol.act.beta) out << 1e3 * b << ',';
    for (double a : sol.act.alpha) out << a * 180.0 / std::numbers::pi << ',';
    for (int t = 0; t < 3; ++t) {
      const Eigen::Vector3d p = sol.states[sol.distal_index[t]].p();
      out << 1e3 * p.x() << ',' << 1e3 * p.y() << ',' << 1e3 * p.z() << (t < 2 ? "," : "\n");
    }
  }
  return out.str();
}

const char* kWideMap = R"(
units: {length: mm, angle: deg}
columns: {beta1: b1, beta2: b2, beta3: b3, alpha1: a1, alpha2: a2, alpha3: a3}
tips:
  - {tube: 1, x: x1, y: y1, z: z1}
  - {tube: 2, x: x2, y: y2, z: z2}
  - {tube: 3, x: x3, y: y3, z: z3}
)";

const char* kCanonicalMap = R"(
units: {length: m, angle: rad}
columns: {beta1: beta1, beta2: beta2, beta3: beta3, alpha1: alpha1, alpha2: alpha2, alpha3: alpha3}
tube_column: tube
tips:
  - {x: px, y: py, z: pz}
)";

std::vector<BackboneSolution> solved_actuations(int n, std::uint64_t seed, double alpha_limit) {
  ActuationDomain dom;
  dom.alpha_limit = alpha_limit;
  std::mt19937_64 rng(seed);
  std::vector<BackboneSolution> out;
  for (int k = 0; k < n; ++k) {
    out.push_back(solve(table1(), sample_actuation(dom, rng)));
    REQUIRE(out.back().converged);
  }
  return out;
}

}  // namespace

TEST_CASE("synthetic generation emits three distal tips per actuation") {
  const Dataset d = small_synthetic(1);
  REQUIRE(d.records.size() == 36);
  for (std::size_t k = 0; k < d.records.size(); ++k) {
    const ObservationRecord& r = d.records[k];
    CHECK(r.tube == static_cast<int>(k % 3) + 1);
    CHECK(r.source == Source::synthetic);
    CHECK(check_record(r, table1(), ActuationDomain{}).empty());
  }
  CHECK(d.metadata.contains("generator"));
}

TEST_CASE("synthetic generation is deterministic across thread counts") {
  CHECK(to_text(small_synthetic(2, 10, 1)) == to_text(small_synthetic(2, 10, 3)));
  CHECK(to_text(small_synthetic(2, 10, 2)) != to_text(small_synthetic(3, 10, 2)));
}

TEST_CASE("records agree with an independent finer solve") {
  const Dataset d = small_synthetic(4, 8);
  for (const ObservationRecord& r : d.records) {
    SolverOptions fine;
    fine.step = (table1().max_length() + r.act.beta[0]) / 800.0;
    const BackboneSolution sol = solve(table1(), r.act, fine);
    REQUIRE(sol.converged);
    const auto& st = sol.states[sol.distal_index[r.tube - 1]];
    CHECK(sol.grid[sol.distal_index[r.tube - 1]] == doctest::Approx(r.s).epsilon(1e-12));
    CHECK((st.p() - r.p).norm() < 1e-8);
  }
}

TEST_CASE("a misconfigured solver aborts generation") {
  std::mt19937_64 rng(5);
  GenerationOptions opts;
  opts.solver.max_iter = 1;
  GenerationReport report;
  CHECK_THROWS_AS(generate_synthetic(10, rng, table1(), ActuationDomain{}, opts, &report),
                  DataError);
}

TEST_CASE("dataset files round trip losslessly") {
  Dataset d = small_synthetic(6, 5);
  d.metadata["robot_hash"] = robot_hash(table1());
  d.records[1].source = Source::experimental;
  std::stringstream ss;
  write_dataset(ss, d);
  const std::string text = ss.str();
  CHECK(text.rfind("# ctr-observations v1", 0) == 0);
  CHECK(text.find("units") != std::string::npos);
  const Dataset back = read_dataset(ss);
  CHECK(back.records == d.records);
  CHECK(back.metadata == d.metadata);
  CHECK(to_text(back) == text);

  std::istringstream broken(text + "1,0.2,not-a-number\n");
  CHECK_THROWS(read_dataset(broken));
}

TEST_CASE("record validation") {
  const Dataset d = small_synthetic(7, 1);
  ObservationRecord r = d.records[0];
  CHECK(check_record(r, table1(), ActuationDomain{}).empty());
  ObservationRecord bad = r;
  bad.tube = 4;
  CHECK_FALSE(check_record(bad, table1(), ActuationDomain{}).empty());
  bad = r;
  bad.s += 1e-6;
  CHECK_FALSE(check_record(bad, table1(), ActuationDomain{}).empty());
  bad = r;
  bad.p.x() = std::nan("");
  CHECK_FALSE(check_record(bad, table1(), ActuationDomain{}).empty());
  bad = r;
  bad.p = Eigen::Vector3d(0, 0, 0.5);
  CHECK_FALSE(check_record(bad, table1(), ActuationDomain{}).empty());
  bad = r;
  bad.act.beta[1] = bad.act.beta[2] + 0.001;
  CHECK_FALSE(check_record(bad, table1(), ActuationDomain{}).empty());
}

TEST_CASE("ingesting a wide measurement table") {
  const auto sols = solved_actuations(6, 8, std::numbers::pi / 3.0);
  std::string csv = wide_csv(sols);
  csv += "-1,-2,-3,0,0,0,0,0,100,0,0,90,0,0,80\n";   // beta2 > beta3
  csv += "-20,-15,-4,0,0,90,0,0,100,0,0,90,0,0,80\n";  // alpha3 beyond the restriction
  std::istringstream in(csv);
  IngestReport report;
  const Dataset d = ingest_experimental(in, parse_column_map(kWideMap), table1(),
                                        ActuationDomain{}, IngestOptions{}, report);
  CHECK(report.rows == 8);
  CHECK(report.kept == 18);
  CHECK(report.malformed.empty());
  REQUIRE(report.rejected.size() == 2);
  CHECK(report.rejected[0].line == 9);
  CHECK(report.rejected[0].reason.find("beta2 <= beta3") != std::string::npos);
  CHECK(report.rejected[1].reason.find("alpha3") != std::string::npos);
  REQUIRE(d.records.size() == 18);
  for (std::size_t k = 0; k < d.records.size(); ++k) {
    const auto& sol = sols[k / 3];
    const int t = static_cast<int>(k % 3);
    CHECK(d.records[k].tube == t + 1);
    CHECK(d.records[k].source == Source::experimental);
    CHECK((d.records[k].p - sol.states[sol.distal_index[t]].p()).norm() < 1e-12);
    for (int i = 0; i < 3; ++i) CHECK(d.records[k].act.beta[i] == doctest::Approx(sol.act.beta[i]));
  }
}

TEST_CASE("ingest, serialize and ingest again") {
  const auto sols = solved_actuations(5, 9, std::numbers::pi / 3.0);
  std::istringstream in(wide_csv(sols));
  IngestReport report;
  const Dataset first = ingest_experimental(in, parse_column_map(kWideMap), table1(),
                                            ActuationDomain{}, IngestOptions{}, report);
  std::istringstream again(to_text(first));
  const Dataset second = ingest_experimental(again, parse_column_map(kCanonicalMap), table1(),
                                             ActuationDomain{}, IngestOptions{}, report);
  CHECK(second.records == first.records);
  std::istringstream canon(to_text(first));
  CHECK(read_dataset(canon).records == first.records);
}

TEST_CASE("malformed rows are reported with line numbers") {
  const auto sols = solved_actuations(3, 10, 1.0);
  std::string csv = wide_csv(sols);
  csv += "1,2,3\n";
  std::istringstream in(csv);
  IngestReport report;
  IngestOptions opts;
  opts.max_malformed_fraction = 0.5;
  ingest_experimental(in, parse_column_map(kWideMap), table1(), ActuationDomain{}, opts, report);
  REQUIRE(report.malformed.size() == 1);
  CHECK(report.malformed[0].line == 6);
  std::ostringstream rep;
  report.write(rep);
  CHECK(rep.str().find("malformed line 6") != std::string::npos);

  std::istringstream in2(csv);
  CHECK_THROWS_AS(ingest_experimental(in2, parse_column_map(kWideMap), table1(),
                                      ActuationDomain{}, IngestOptions{}, report),
                  DataError);
}

TEST_CASE("seeded subsampling") {
  const auto sols = solved_actuations(8, 11, 1.0);
  const std::string csv = wide_csv(sols);
  auto run = [&](std::uint64_t seed) {
    std::istringstream in(csv);
    IngestReport report;
    IngestOptions opts;
    opts.sample_size = 10;
    opts.seed = seed;
    return ingest_experimental(in, parse_column_map(kWideMap), table1(), ActuationDomain{},
                               opts, report);
  };
  const Dataset a = run(1), b = run(1), c = run(2);
  CHECK(a.records.size() == 10);
  CHECK(a.records == b.records);
  CHECK(a.records != c.records);
}

TEST_CASE("calibration and column map errors") {
  std::string map = kWideMap;
  map += "calibration: {translation: [1, 2, 3], rotation_rpy: [0, 0, 90]}\n";
  const ColumnMap m = parse_column_map(map);
  CHECK((m.calibration.translation - Eigen::Vector3d(1e-3, 2e-3, 3e-3)).norm() < 1e-15);
  CHECK((m.calibration.rotation * Eigen::Vector3d::UnitX() - Eigen::Vector3d::UnitY()).norm() <
        1e-12);
  CHECK_THROWS_AS(parse_column_map("tips: []"), DataError);
  CHECK_THROWS_AS(parse_column_map(std::string(kWideMap) + "delimiter: ';;'\n"), DataError);
  CHECK_THROWS_AS(parse_column_map("units: {length: furlong}\ncolumns: {}"), DataError);
}

TEST_CASE("outlier screen") {
  Dataset d = small_synthetic(12, 10);
  SolverOptions solver;
  const ScreenResult clean = outlier_screen(d.records, table1(), solver, 10.0, 2);
  CHECK(clean.flagged.empty());
  CHECK(clean.clean.size() == d.records.size());

  std::mt19937_64 rng(1);
  std::normal_distribution<double> noise(0.0, 0.001);
  for (auto& r : d.records) r.p += Eigen::Vector3d(noise(rng), noise(rng), noise(rng));
  d.records[4].p.z() += 0.050;
  const ScreenResult s = outlier_screen(d.records, table1(), solver, 10.0, 2);
  REQUIRE(s.flagged.size() == 1);
  CHECK(s.flagged[0] == d.records[4]);
  CHECK(s.clean.size() == d.records.size() - 1);
  CHECK(s.median > 0.0);

  std::size_t previous = d.records.size() + 1;
  for (double k : {0.5, 1.0, 2.0, 5.0, 10.0, 50.0}) {
    const std::size_t n = outlier_screen(d.records, table1(), solver, k, 2).flagged.size();
    CHECK(n <= previous);
    previous = n;
  }
}
