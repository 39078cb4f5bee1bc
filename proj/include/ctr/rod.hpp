#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace ctr {

inline constexpr int kNumTubes = 3;
inline constexpr int kStateDim = 15;

using StateVector = Eigen::Matrix<double, kStateDim, 1>;

/// Offsets of the state groups inside the 15-vector
/// [m_xy(2), u_z(3), theta(3), p(3), h(4)].
namespace idx {
inline constexpr int m = 0;
inline constexpr int uz = 2;
inline constexpr int theta = 5;
inline constexpr int p = 8;
inline constexpr int h = 11;
}  // namespace idx

/// State groups, in storage order. Loss weights and scales are per group.
enum class StateGroup { moment = 0, torsion = 1, twist = 2, position = 3, orientation = 4 };
inline constexpr int kNumGroups = 5;
inline constexpr std::array<int, kNumGroups> kGroupOffset{idx::m, idx::uz, idx::theta, idx::p, idx::h};
inline constexpr std::array<int, kNumGroups> kGroupSize{2, 3, 3, 3, 4};
inline constexpr std::array<const char*, kNumGroups> kGroupName{"m", "u", "theta", "p", "h"};

/// Geometry and material of one pre-curved tube, SI units.
struct TubeSpec {
  double inner_diameter = 0.0;
  double outer_diameter = 0.0;
  double straight_length = 0.0;
  double curved_length = 0.0;
  double precurvature = 0.0;  // kappa, about the local x-axis
  double youngs_modulus = 0.0;
  double shear_modulus = 0.0;

  [[nodiscard]] double length() const { return straight_length + curved_length; }

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct SectionProperties {
  double I = 0.0;   // second moment of area [m^4]
  double J = 0.0;   // polar moment [m^4]
  double EI = 0.0;  // bending stiffness [N m^2]
  double GJ = 0.0;  // torsional stiffness [N m^2]
};

/// Annular cross-section properties. Throws for degenerate geometry.
SectionProperties section_properties(const TubeSpec& tube);

/// Three nested tubes, index 0 = innermost/longest.
struct RobotSpec {
  std::array<TubeSpec, kNumTubes> tubes{};

  void validate() const;
  [[nodiscard]] double max_length() const { return tubes[0].length(); }
  /// Sum of E_i I_i kappa_i, the moment a fully overlapped curved section can carry.
  [[nodiscard]] double characteristic_moment() const;
  [[nodiscard]] double max_precurvature() const;
};

/// Joint values: translations beta (<= 0, metres) and rotations alpha (radians).
struct Actuation {
  std::array<double, kNumTubes> beta{};
  std::array<double, kNumTubes> alpha{};

  /// [beta1, beta2, beta3, alpha1, alpha2, alpha3]
  static Actuation from_array(std::span<const double, 6> v);
  [[nodiscard]] std::array<double, 6> to_array() const;
  friend bool operator==(const Actuation&, const Actuation&) = default;
};

/// The snap-free actuation box. Defaults are the full joint range used for
/// the physics oracle; training restricts `alpha_limit` further.
struct ActuationDomain {
  double beta3_min = -0.010;
  double beta2_span = 0.055;
  double beta1_span = 0.015;
  double alpha_limit = std::numbers::pi;

  /// Description of the first violated inequality, or nullopt when inside.
  [[nodiscard]] std::optional<std::string> violation(const Actuation& act) const;
  [[nodiscard]] bool contains(const Actuation& act) const { return !violation(act); }

  /// Per-joint bounding box, order [beta1, beta2, beta3, alpha1, alpha2, alpha3].
  [[nodiscard]] std::array<double, 6> lower_bounds() const;
  [[nodiscard]] std::array<double, 6> upper_bounds() const;

  friend bool operator==(const ActuationDomain&, const ActuationDomain&) = default;
};

/// Named view over the 15-dimensional state at one arc-length.
struct RodState {
  StateVector x = StateVector::Zero();

  RodState() = default;
  explicit RodState(const StateVector& v) : x(v) {}

  [[nodiscard]] double m(int k) const { return x[idx::m + k]; }
  [[nodiscard]] double uz(int i) const { return x[idx::uz + i]; }
  [[nodiscard]] double theta(int i) const { return x[idx::theta + i]; }
  [[nodiscard]] Eigen::Vector3d p() const { return x.segment<3>(idx::p); }
  [[nodiscard]] Eigen::Vector4d h() const { return x.segment<4>(idx::h); }  // (w, x, y, z)

  /// Derived z-moment sum_i G_i J_i u_{i,z} over all tubes.
  [[nodiscard]] double m_z(std::span<const double, kNumTubes> gj) const;
};

/// Constant properties between two transition points.
struct SegmentProps {
  std::array<bool, kNumTubes> present{};
  std::array<double, kNumTubes> EI{};
  std::array<double, kNumTubes> GJ{};
  std::array<double, kNumTubes> kappa{};  // active pre-curvature, 0 when straight or absent
};

struct SegmentLayout {
  std::vector<double> boundaries;        // 0 = first < ... < last = l1
  std::vector<SegmentProps> segments;    // boundaries.size() - 1 entries
  std::array<double, kNumTubes> distal{};        // l_i = L_i + beta_i
  std::array<double, kNumTubes> curved_start{};  // beta_i + straight_i (may be < 0)

  [[nodiscard]] double length() const { return boundaries.back(); }
  /// Index of the segment containing s; boundary points belong to the
  /// segment on their right except s = l1. Throws std::domain_error outside [0, l1].
  [[nodiscard]] std::size_t segment_index(double s) const;
  [[nodiscard]] const SegmentProps& props_at(double s) const { return segments[segment_index(s)]; }
};

/// Transition points and per-segment tables. Throws std::domain_error when
/// the actuation leaves `domain`.
SegmentLayout segment_layout(const RobotSpec& robot, const Actuation& act,
                             const ActuationDomain& domain = {});

/// Quaternion (w, x, y, z) of a rotation about z by `angle`.
Eigen::Vector4d quat_rot_z(double angle);
/// Rotation matrix of a unit quaternion (w, x, y, z).
Eigen::Matrix3d quat_to_matrix(const Eigen::Vector4d& h);

// ---------------------------------------------------------------------------
// Right-hand side of the composite-tube system, templated on the scalar so the
// same code yields values (double) and Jacobians (Dual<N>).

template <class Vec>
using scalar_of_t = std::decay_t<decltype(std::declval<const Vec&>()[0])>;

/// x/y curvature of the innermost tube:
/// u1_xy = K^{-1}(m + K1 u1* + sum_{i>1} Rz(theta_i) K_i u_i*)|xy.
template <class Vec>
std::array<scalar_of_t<Vec>, 2> composite_curvature_xy(const Vec& x, const SegmentProps& seg) {
  using T = scalar_of_t<Vec>;
  using std::cos;
  using std::sin;
  double k_bend = 0.0;
  T num_x = x[idx::m + 0];
  T num_y = x[idx::m + 1];
  for (int i = 0; i < kNumTubes; ++i) {
    if (!seg.present[i]) continue;
    k_bend += seg.EI[i];
    const double pre = seg.EI[i] * seg.kappa[i];
    if (pre == 0.0) continue;
    if (i == 0) {
      num_x += pre;
    } else {
      const T& th = x[idx::theta + i];
      num_x += pre * cos(th);
      num_y += pre * sin(th);
    }
  }
  return {num_x / k_bend, num_y / k_bend};
}

/// d(state)/ds within one segment. Absent tubes have frozen torsion and twist.
template <class Vec, class Out>
void rod_derivative(const Vec& x, const SegmentProps& seg, Out& dx) {
  using T = scalar_of_t<Vec>;
  using std::cos;
  using std::sin;

  const auto [u1x, u1y] = composite_curvature_xy(x, seg);
  const T& u1z = x[idx::uz + 0];

  T mz = T(0.0);
  for (int i = 0; i < kNumTubes; ++i)
    if (seg.present[i]) mz += seg.GJ[i] * x[idx::uz + i];
  const T& mx = x[idx::m + 0];
  const T& my = x[idx::m + 1];

  // m' = -(u1 x m), x/y rows only
  dx[idx::m + 0] = -(u1y * mz - u1z * my);
  dx[idx::m + 1] = -(u1z * mx - u1x * mz);

  for (int i = 0; i < kNumTubes; ++i) {
    if (!seg.present[i]) {
      dx[idx::uz + i] = T(0.0);
      dx[idx::theta + i] = T(0.0);
      continue;
    }
    if (seg.kappa[i] == 0.0) {
      dx[idx::uz + i] = T(0.0);
    } else {
      // u_{i,y} = (Rz(theta_i)^T u1)_y; u_i* = [kappa, 0, 0]
      T uiy = u1y;
      if (i > 0) {
        const T& th = x[idx::theta + i];
        uiy = -sin(th) * u1x + cos(th) * u1y;
      }
      dx[idx::uz + i] = -(seg.EI[i] / seg.GJ[i]) * seg.kappa[i] * uiy;
    }
    dx[idx::theta + i] = (i == 0) ? T(0.0) : x[idx::uz + i] - u1z;
  }

  const T& hw = x[idx::h + 0];
  const T& hx = x[idx::h + 1];
  const T& hy = x[idx::h + 2];
  const T& hz = x[idx::h + 3];

  // p' = R(h) e3, third column of the unit-quaternion rotation matrix
  dx[idx::p + 0] = 2.0 * (hx * hz + hw * hy);
  dx[idx::p + 1] = 2.0 * (hy * hz - hw * hx);
  dx[idx::p + 2] = 1.0 - 2.0 * (hx * hx + hy * hy);

  // h' = 1/2 h (x) (0, u1)
  dx[idx::h + 0] = -0.5 * (hx * u1x + hy * u1y + hz * u1z);
  dx[idx::h + 1] = 0.5 * (hw * u1x + hy * u1z - hz * u1y);
  dx[idx::h + 2] = 0.5 * (hw * u1y + hz * u1x - hx * u1z);
  dx[idx::h + 3] = 0.5 * (hw * u1z + hx * u1y - hy * u1x);
}

/// d(state)/ds at arc-length s. Throws std::domain_error for s outside [0, l1].
StateVector ode_rhs(double s, const RodState& state, const SegmentLayout& layout);

}  // namespace ctr
