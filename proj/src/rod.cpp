#include "ctr/rod.hpp"

#include <algorithm>
#include <sstream>

namespace ctr {

namespace {

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw std::invalid_argument(field + ": " + what);
}

std::string fmt_num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

void TubeSpec::validate() const {
  auto finite = [](double v) { return std::isfinite(v); };
  require(finite(inner_diameter) && inner_diameter > 0.0, "inner_diameter", "must be > 0");
  require(finite(outer_diameter) && outer_diameter > inner_diameter, "outer_diameter",
          "must exceed inner_diameter");
  require(finite(straight_length) && straight_length >= 0.0, "straight_length", "must be >= 0");
  require(finite(curved_length) && curved_length > 0.0, "curved_length", "must be > 0");
  require(finite(precurvature) && precurvature >= 0.0, "precurvature", "must be >= 0");
  require(finite(youngs_modulus) && youngs_modulus > 0.0, "youngs_modulus", "must be > 0");
  require(finite(shear_modulus) && shear_modulus > 0.0, "shear_modulus", "must be > 0");
}

SectionProperties section_properties(const TubeSpec& tube) {
  tube.validate();
  const double d_o = tube.outer_diameter;
  const double d_i = tube.inner_diameter;
  SectionProperties sp;
  sp.I = std::numbers::pi / 64.0 * (d_o * d_o * d_o * d_o - d_i * d_i * d_i * d_i);
  sp.J = 2.0 * sp.I;
  sp.EI = tube.youngs_modulus * sp.I;
  sp.GJ = tube.shear_modulus * sp.J;
  return sp;
}

void RobotSpec::validate() const {
  for (int i = 0; i < kNumTubes; ++i) {
    try {
      tubes[i].validate();
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("tubes[" + std::to_string(i) + "]." + e.what());
    }
  }
  for (int i = 0; i + 1 < kNumTubes; ++i) {
    const std::string next = "tubes[" + std::to_string(i + 1) + "].";
    require(tubes[i].length() > tubes[i + 1].length(), next + "curved_length",
            "total length must be shorter than the tube it surrounds");
    require(tubes[i].outer_diameter < tubes[i + 1].inner_diameter, next + "inner_diameter",
            "must exceed the outer diameter of the tube inside it");
  }
}

double RobotSpec::characteristic_moment() const {
  double m = 0.0;
  for (const auto& t : tubes) m += section_properties(t).EI * t.precurvature;
  return m;
}

double RobotSpec::max_precurvature() const {
  double k = 0.0;
  for (const auto& t : tubes) k = std::max(k, t.precurvature);
  return k;
}

Actuation Actuation::from_array(std::span<const double, 6> v) {
  Actuation a;
  for (int i = 0; i < kNumTubes; ++i) {
    a.beta[i] = v[i];
    a.alpha[i] = v[3 + i];
  }
  return a;
}

std::array<double, 6> Actuation::to_array() const {
  return {beta[0], beta[1], beta[2], alpha[0], alpha[1], alpha[2]};
}

std::optional<std::string> ActuationDomain::violation(const Actuation& act) const {
  for (int i = 0; i < kNumTubes; ++i) {
    if (!std::isfinite(act.beta[i]) || !std::isfinite(act.alpha[i]))
      return "actuation values must be finite";
  }
  const auto& b = act.beta;
  const std::string b1 = fmt_num(b[0]), b2 = fmt_num(b[1]), b3 = fmt_num(b[2]);
  if (b[2] > 0.0) return "beta3 <= 0 violated (beta3 = " + b3 + ")";
  if (b[2] < beta3_min)
    return "beta3 >= " + fmt_num(beta3_min) + " violated (beta3 = " + b3 + ")";
  if (b[1] > b[2]) return "beta2 <= beta3 violated (beta2 = " + b2 + ", beta3 = " + b3 + ")";
  if (b[1] < b[2] - beta2_span)
    return "beta2 >= beta3 - " + fmt_num(beta2_span) + " violated (beta2 = " + b2 +
           ", beta3 = " + b3 + ")";
  if (b[0] > b[1]) return "beta1 <= beta2 violated (beta1 = " + b1 + ", beta2 = " + b2 + ")";
  if (b[0] < b[1] - beta1_span)
    return "beta1 >= beta2 - " + fmt_num(beta1_span) + " violated (beta1 = " + b1 +
           ", beta2 = " + b2 + ")";
  for (int i = 0; i < kNumTubes; ++i) {
    if (std::abs(act.alpha[i]) > alpha_limit)
      return "|alpha" + std::to_string(i + 1) + "| <= " + fmt_num(alpha_limit) +
             " violated (alpha" + std::to_string(i + 1) + " = " + fmt_num(act.alpha[i]) + ")";
  }
  return std::nullopt;
}

std::array<double, 6> ActuationDomain::lower_bounds() const {
  const double b3 = beta3_min;
  const double b2 = b3 - beta2_span;
  const double b1 = b2 - beta1_span;
  return {b1, b2, b3, -alpha_limit, -alpha_limit, -alpha_limit};
}

std::array<double, 6> ActuationDomain::upper_bounds() const {
  return {0.0, 0.0, 0.0, alpha_limit, alpha_limit, alpha_limit};
}

double RodState::m_z(std::span<const double, kNumTubes> gj) const {
  double mz = 0.0;
  for (int i = 0; i < kNumTubes; ++i) mz += gj[i] * uz(i);
  return mz;
}

std::size_t SegmentLayout::segment_index(double s) const {
  if (!(s >= 0.0 && s <= boundaries.back()))
    throw std::domain_error("arc-length " + fmt_num(s) + " outside [0, " +
                            fmt_num(boundaries.back()) + "]");
  auto it = std::upper_bound(boundaries.begin(), boundaries.end(), s);
  auto k = static_cast<std::size_t>(std::distance(boundaries.begin(), it));
  // k is the number of boundaries <= s; segment k-1 starts at boundaries[k-1]
  return std::min(k - 1, segments.size() - 1);
}

SegmentLayout segment_layout(const RobotSpec& robot, const Actuation& act,
                             const ActuationDomain& domain) {
  if (auto why = domain.violation(act)) throw std::domain_error("actuation outside box: " + *why);

  SegmentLayout layout;
  std::array<SectionProperties, kNumTubes> sp;
  for (int i = 0; i < kNumTubes; ++i) {
    sp[i] = section_properties(robot.tubes[i]);
    layout.distal[i] = robot.tubes[i].length() + act.beta[i];
    layout.curved_start[i] = act.beta[i] + robot.tubes[i].straight_length;
  }
  const double l1 = layout.distal[0];

  std::vector<double> pts{0.0, l1};
  for (int i = 0; i < kNumTubes; ++i) {
    pts.push_back(std::clamp(layout.curved_start[i], 0.0, l1));
    pts.push_back(std::clamp(layout.distal[i], 0.0, l1));
  }
  std::sort(pts.begin(), pts.end());
  // Coincident transitions collapse; tolerance is far below any physical length.
  constexpr double merge_tol = 1e-12;
  for (double v : pts) {
    if (layout.boundaries.empty() || v - layout.boundaries.back() > merge_tol)
      layout.boundaries.push_back(v);
  }
  if (layout.boundaries.size() < 2) throw std::domain_error("robot has zero exposed length");
  layout.boundaries.back() = l1;

  for (std::size_t k = 0; k + 1 < layout.boundaries.size(); ++k) {
    const double mid = 0.5 * (layout.boundaries[k] + layout.boundaries[k + 1]);
    SegmentProps seg;
    for (int i = 0; i < kNumTubes; ++i) {
      seg.present[i] = mid < layout.distal[i];
      seg.EI[i] = sp[i].EI;
      seg.GJ[i] = sp[i].GJ;
      seg.kappa[i] =
          (seg.present[i] && mid > layout.curved_start[i]) ? robot.tubes[i].precurvature : 0.0;
    }
    layout.segments.push_back(seg);
  }
  return layout;
}

Eigen::Vector4d quat_rot_z(double angle) {
  return {std::cos(0.5 * angle), 0.0, 0.0, std::sin(0.5 * angle)};
}

Eigen::Matrix3d quat_to_matrix(const Eigen::Vector4d& h) {
  const double w = h[0], x = h[1], y = h[2], z = h[3];
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

StateVector ode_rhs(double s, const RodState& state, const SegmentLayout& layout) {
  StateVector dx;
  rod_derivative(state.x, layout.props_at(s), dx);
  return dx;
}

}  // namespace ctr
