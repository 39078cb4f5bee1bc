#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "ctr/bvp.hpp"
#include "ctr/dataset.hpp"
#include "ctr/network.hpp"

namespace ctr {

/// Positions of a model along one actuation: column k is p(s[k]).
using ShapeModel =
    std::function<Eigen::Matrix3Xd(const Actuation& act, const std::vector<double>& s)>;
ShapeModel shape_model(const Network& net);

struct Summary {
  double mean = 0.0, std = 0.0, min = 0.0, max = 0.0;
  double median = 0.0, q1 = 0.0, q3 = 0.0, p95 = 0.0;
  std::size_t n = 0;
  [[nodiscard]] double iqr() const { return q3 - q1; }
  [[nodiscard]] nlohmann::json to_json() const;
};
/// Linear-interpolated quantiles; an empty sample gives all zeros.
Summary summarize(std::vector<double> v);

struct ShapeErrorReport {
  std::vector<double> stations;  // s / l1, first at 1/grid_n
  std::vector<Actuation> acts;
  std::vector<std::vector<double>> error;  // [actuation][station], |p_hat - p| / s
  std::vector<Summary> per_station;
  Summary overall;
  std::vector<std::string> excluded;  // actuations the oracle did not solve

  [[nodiscard]] nlohmann::json to_json() const;
  void write_table(std::ostream& out) const;
};

/// Normalized backbone error against the shooting solution on stations
/// s / l1 = k / grid_n, k = 1..grid_n.
ShapeErrorReport backbone_error(const ShapeModel& model, const RobotSpec& robot,
                                const SolverOptions& solver, const std::vector<Actuation>& acts,
                                int grid_n = 50, int threads = 1);

struct TipErrorReport {
  struct PerTube {
    std::vector<double> abs;   // [m]
    std::vector<double> norm;  // abs / s
    Summary abs_summary, norm_summary;
    std::vector<double> bin_edges;  // histogram of norm
    std::vector<long> bin_counts;
  };
  std::array<PerTube, 3> tube;
  Summary abs_all, norm_all;

  [[nodiscard]] nlohmann::json to_json() const;
};

TipErrorReport tip_error(const ShapeModel& model, const std::vector<ObservationRecord>& records,
                         int bins = 20);

/// Geodesic angle between two orientations after renormalization and sign
/// alignment, in [0, pi]. NaN if either quaternion has (near) zero norm.
double orientation_error(const Eigen::Vector4d& q_model, const Eigen::Vector4d& q_ref);

struct StateRecoveryReport {
  Actuation act;
  std::vector<double> s;
  Eigen::MatrixXd oracle;  // 15 x n
  Eigen::MatrixXd model;   // 15 x n, quaternion renormalized and sign aligned
  std::vector<double> orientation_error;
  std::array<double, kStateDim> rms{};
  std::array<double, kStateDim> range{};  // oracle max - min
  double theta1_rms = 0.0;
  /// Network values at the distal conditions: m_x(l1), m_y(l1), u_iz(l_i).
  std::array<double, 5> distal{};

  [[nodiscard]] nlohmann::json to_json() const;
  void write_table(std::ostream& out) const;
};

StateRecoveryReport state_recovery(const Network& net, const RobotSpec& robot,
                                   const SolverOptions& solver, const Actuation& act,
                                   int n_points = 200);

struct RuntimeReport {
  struct Entry {
    int discretization = 0;
    std::vector<double> pinn;    // seconds per evaluation
    std::vector<double> solver;  // seconds per solve
    Summary pinn_summary, solver_summary;
    long solver_failures = 0;
  };
  std::vector<Entry> entries;
  int n_acts = 0;
  int warmup = 0;
  int repeats = 1;
  std::uint64_t seed = 0;

  [[nodiscard]] nlohmann::json to_json() const;
  void write_table(std::ostream& out) const;
};

inline const std::vector<int> kDefaultDiscretizations{50, 100, 200, 400};

/// Single-threaded timings of network backbone evaluation on n-point grids
/// and of full solves with step l1 / n, over the same random actuations.
RuntimeReport runtime_bench(const Network& net, const RobotSpec& robot, int n_acts,
                            const std::vector<int>& discretizations, std::uint64_t seed,
                            const ActuationDomain& domain, int warmup = 100, int repeats = 5);

/// Largest | |h| - 1 | over a solution's grid.
double max_quaternion_drift(const BackboneSolution& sol);

/// Seeded actuations for held-out evaluation.
std::vector<Actuation> sample_actuations(int n, std::uint64_t seed, const ActuationDomain& domain);

}  // namespace ctr
