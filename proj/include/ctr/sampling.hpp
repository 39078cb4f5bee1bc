#pragma once

#include <random>
#include <vector>

#include <Eigen/Core>

#include "ctr/rod.hpp"

namespace ctr {

/// Default training-set sizes of the full-scale recipe.
inline constexpr int kDefaultCollocation = 20000;
inline constexpr int kDefaultBoundary = 1000;
inline constexpr int kDefaultObservations = 1000;

/// (s, tau) pairs where the rod equations are enforced.
struct CollocationSet {
  std::vector<double> s;
  std::vector<Actuation> act;
  [[nodiscard]] std::size_t size() const { return s.size(); }
};

/// Actuations whose boundary conditions are enforced at s in {0, l3, l2, l1}.
struct BoundarySet {
  std::vector<Actuation> act;
  [[nodiscard]] std::size_t size() const { return act.size(); }
};

/// Position observations (s, tau, p_bar).
struct ObservationSet {
  std::vector<double> s;
  std::vector<Actuation> act;
  std::vector<Eigen::Vector3d> p;
  [[nodiscard]] std::size_t size() const { return s.size(); }
};

/// Uniform draw from the actuation box. The chained translation limits are
/// sampled in sequence; each conditional interval has fixed width, so the
/// joint density is uniform.
Actuation sample_actuation(const ActuationDomain& domain, std::mt19937_64& rng);

/// s uniform on [0, l1(tau)], tau uniform on the domain.
CollocationSet sample_collocation(int n, const RobotSpec& robot, const ActuationDomain& domain,
                                  std::mt19937_64& rng);
BoundarySet sample_boundary(int n, const ActuationDomain& domain, std::mt19937_64& rng);

}  // namespace ctr
