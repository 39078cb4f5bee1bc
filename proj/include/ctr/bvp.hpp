#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ctr/rod.hpp"

namespace ctr {

using Residual = Eigen::Matrix<double, 5, 1>;

/// Unknown proximal values of the shooting problem.
struct ShootingGuess {
  std::array<double, 2> m_xy{};
  std::array<double, kNumTubes> u_z{};

  [[nodiscard]] Eigen::Matrix<double, 5, 1> to_vector() const;
  static ShootingGuess from_vector(const Eigen::Matrix<double, 5, 1>& v);
};

class IntegrationDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BackboneSolution {
  Actuation act;
  SegmentLayout layout;
  ShootingGuess guess;
  std::vector<double> grid;
  std::vector<RodState> states;
  /// Grid index of each tube's distal end l_i.
  std::array<std::size_t, kNumTubes> distal_index{};
  Residual residual = Residual::Zero();
  int iterations = 0;
  bool converged = false;

  [[nodiscard]] const RodState& tip() const { return states.back(); }
};

struct SolverOptions {
  double tol = 1e-10;
  int max_iter = 100;
  /// Integration step [m]; <= 0 selects l1 / 400.
  double step = 0.0;
  std::optional<ShootingGuess> initial_guess;
  double fd_step = 1e-6;
  int max_halvings = 20;
  ActuationDomain domain{};
};

inline constexpr int kDefaultStepsPerLength = 400;

/// State at s = 0 from the actuation and the guessed proximal unknowns.
RodState proximal_state(const Actuation& act, const ShootingGuess& guess);

/// Fixed-step RK4 through every segment (steps never straddle a transition).
/// The residual field is left at zero. Throws IntegrationDiverged on
/// non-finite states.
BackboneSolution integrate(const RobotSpec& robot, const Actuation& act,
                           const ShootingGuess& guess, double step,
                           const ActuationDomain& domain = {});

/// [m_x(l1), m_y(l1), u1z(l1), u2z(l2), u3z(l3)]
Residual distal_residual(const BackboneSolution& sol);

/// Shooting with damped Newton-Raphson and a forward-difference Jacobian.
/// Non-convergence is reported through `converged`, not thrown.
BackboneSolution solve(const RobotSpec& robot, const Actuation& act,
                       const SolverOptions& opts = {});

/// Piecewise-cubic Hermite interpolation of a solution, using the rod
/// right-hand side for node derivatives. s is clamped to [0, l1].
class BackboneInterpolant {
 public:
  explicit BackboneInterpolant(const BackboneSolution& sol) : sol_(&sol) {}

  [[nodiscard]] RodState state(double s) const;
  /// Value and d/ds of the interpolant.
  [[nodiscard]] std::pair<StateVector, StateVector> state_and_derivative(double s) const;

 private:
  const BackboneSolution* sol_;
};

/// Text table: '#' metadata header, then one row per grid point
/// (s, p, h, theta, u_z, m_xy).
void write_backbone(std::ostream& out, const BackboneSolution& sol, double tol,
                    const std::string& robot_hash);

struct BackboneTable {
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<double> s;
  std::vector<RodState> states;
};
BackboneTable read_backbone(std::istream& in);

}  // namespace ctr
