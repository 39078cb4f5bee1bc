#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "ctr/bvp.hpp"
#include "ctr/rod.hpp"
#include "ctr/sampling.hpp"

namespace ctr {

enum class Source { synthetic, experimental };
const char* to_string(Source s);

/// Distal-tip position of one tube under one actuation.
struct ObservationRecord {
  Actuation act;
  int tube = 1;  // 1..3
  double s = 0.0;
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  Source source = Source::synthetic;

  friend bool operator==(const ObservationRecord&, const ObservationRecord&) = default;
};

struct Dataset {
  std::vector<ObservationRecord> records;
  /// Free-form header data (robot hash, seed, domain, command config).
  nlohmann::json metadata = nlohmann::json::object();

  [[nodiscard]] ObservationSet to_set() const;
};

/// Checks tube id, s = l_tube(tau), finiteness and |p| <= l1 + margin.
/// Returns an empty string when the record is valid.
std::string check_record(const ObservationRecord& r, const RobotSpec& robot,
                         const ActuationDomain& domain);

struct GenerationOptions {
  SolverOptions solver;
  int threads = 1;
  /// Abort when more than this fraction of solves fail.
  double max_failure_fraction = 0.01;
};

struct GenerationReport {
  int requested = 0;
  int converged = 0;
  std::vector<std::string> skipped;  // one message per failed actuation
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Solves n random actuations and emits the three distal tips of each.
Dataset generate_synthetic(int n, std::mt19937_64& rng, const RobotSpec& robot,
                           const ActuationDomain& domain, const GenerationOptions& opts,
                           GenerationReport* report = nullptr);

/// Observation table: "# ctr-observations v1", one JSON metadata line, CSV.
void write_dataset(std::ostream& out, const Dataset& data);
Dataset read_dataset(std::istream& in);
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// External measurements

/// Source column and affine conversion to SI: value = raw * scale + offset.
struct ColumnSpec {
  std::string column;
  double scale = 1.0;
  double offset = 0.0;
};

struct TipColumns {
  int tube = 1;
  std::array<ColumnSpec, 3> p;
};

/// Fixed rigid transform applied to measured positions: p' = R p + t.
struct Calibration {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

struct ColumnMap {
  char delimiter = ',';
  std::array<ColumnSpec, 3> beta;
  std::array<ColumnSpec, 3> alpha;
  /// Either tip column groups (one record per group per row), or a tube-id
  /// column plus a single group.
  std::vector<TipColumns> tips;
  std::string tube_column;
  Calibration calibration;
  /// |alpha_i| restriction applied on top of the actuation box.
  double alpha_limit = std::numbers::pi / 3.0;
};

/// Column map document (YAML). Units may be given per field ("scale") or
/// globally with `units: {length: mm, angle: deg}`.
ColumnMap parse_column_map(const std::string& yaml_text);
ColumnMap load_column_map(const std::filesystem::path& path);

struct IngestIssue {
  long line = 0;
  std::string reason;
};

struct IngestReport {
  long rows = 0;
  long kept = 0;
  std::vector<IngestIssue> malformed;
  std::vector<IngestIssue> rejected;  // parsed, but outside the domain
  long subsampled_to = -1;
  void write(std::ostream& out) const;
};

struct IngestOptions {
  /// Keep at most this many records (seeded draw without replacement); <= 0 keeps all.
  long sample_size = 0;
  std::uint64_t seed = 0;
  double max_malformed_fraction = 0.10;
};

/// Throws DataError (with the report filled) when too many rows are malformed.
Dataset ingest_experimental(std::istream& in, const ColumnMap& map, const RobotSpec& robot,
                            const ActuationDomain& domain, const IngestOptions& opts,
                            IngestReport& report);

struct ScreenResult {
  std::vector<ObservationRecord> clean;
  std::vector<ObservationRecord> flagged;
  std::vector<double> deviation;  // per input record, oracle tip distance [m]
  double median = 0.0;
  std::vector<std::string> unsolved;  // actuations the oracle did not converge on
};

/// Flags records whose oracle deviation exceeds k times the median deviation.
ScreenResult outlier_screen(const std::vector<ObservationRecord>& records, const RobotSpec& robot,
                            const SolverOptions& solver, double k = 10.0, int threads = 1);

}  // namespace ctr
