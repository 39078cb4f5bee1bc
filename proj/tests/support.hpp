#pragma once

#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "ctr/robot_config.hpp"
#include "ctr/rod.hpp"

namespace ctr::testing {

inline RobotSpec table1() { return reference_robot(); }

inline RobotSpec straight_robot() {
  RobotSpec r = reference_robot();
  for (auto& t : r.tubes) t.precurvature = 0.0;
  return r;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

/// Unit-quaternion state with random entries of plausible magnitude.
inline StateVector random_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  StateVector x;
  for (int k = 0; k < 2; ++k) x[idx::m + k] = 0.05 * u(rng);
  for (int k = 0; k < 3; ++k) x[idx::uz + k] = 10.0 * u(rng);
  x[idx::theta] = 0.0;
  for (int k = 1; k < 3; ++k) x[idx::theta + k] = 3.0 * u(rng);
  for (int k = 0; k < 3; ++k) x[idx::p + k] = 0.1 * u(rng);
  Eigen::Vector4d h(u(rng), u(rng), u(rng), u(rng));
  x.segment<4>(idx::h) = h.normalized();
  return x;
}

/// Rod right-hand side written from the matrix form: full 3x3 stiffness
/// matrices, explicit z-rotations and Eigen quaternion algebra.
inline StateVector reference_rhs(const StateVector& x, const SegmentProps& seg) {
  Eigen::Matrix3d K = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs(x[idx::m], x[idx::m + 1], 0.0);
  double mz = 0.0;
  std::array<Eigen::Matrix3d, kNumTubes> R;
  for (int i = 0; i < kNumTubes; ++i) {
    R[i] = Eigen::AngleAxisd(x[idx::theta + i], Eigen::Vector3d::UnitZ()).toRotationMatrix();
    if (!seg.present[i]) continue;
    const Eigen::Matrix3d Ki = Eigen::Vector3d(seg.EI[i], seg.EI[i], seg.GJ[i]).asDiagonal();
    K += Ki;
    const Eigen::Vector3d ustar(seg.kappa[i], 0.0, 0.0);
    const Eigen::Matrix3d Ri = i == 0 ? Eigen::Matrix3d::Identity() : R[i];
    rhs += Ri * Ki * ustar;
    mz += seg.GJ[i] * x[idx::uz + i];
  }
  rhs.z() += mz;
  const Eigen::Vector3d u1xy = K.inverse() * rhs;
  const Eigen::Vector3d u1(u1xy.x(), u1xy.y(), x[idx::uz]);
  const Eigen::Vector3d m(x[idx::m], x[idx::m + 1], mz);

  StateVector d = StateVector::Zero();
  const Eigen::Vector3d dm = -u1.cross(m);
  d[idx::m] = dm.x();
  d[idx::m + 1] = dm.y();
  for (int i = 0; i < kNumTubes; ++i) {
    if (!seg.present[i]) continue;
    const Eigen::Matrix3d Ri = i == 0 ? Eigen::Matrix3d::Identity() : R[i];
    const Eigen::Vector3d ui = Ri.transpose() * u1;
    const Eigen::Vector3d ustar(seg.kappa[i], 0.0, 0.0);
    d[idx::uz + i] = seg.EI[i] / seg.GJ[i] * (ui.x() * ustar.y() - ui.y() * ustar.x());
    d[idx::theta + i] = i == 0 ? 0.0 : x[idx::uz + i] - x[idx::uz];
  }
  const Eigen::Quaterniond q(x[idx::h], x[idx::h + 1], x[idx::h + 2], x[idx::h + 3]);
  d.segment<3>(idx::p) = q.toRotationMatrix() * Eigen::Vector3d::UnitZ();
  const Eigen::Quaterniond w(0.0, u1.x(), u1.y(), u1.z());
  const Eigen::Quaterniond dq = q * w;
  d[idx::h] = 0.5 * dq.w();
  d[idx::h + 1] = 0.5 * dq.x();
  d[idx::h + 2] = 0.5 * dq.y();
  d[idx::h + 3] = 0.5 * dq.z();
  return d;
}

}  // namespace ctr::testing
