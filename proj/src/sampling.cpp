#include "ctr/sampling.hpp"

#include <stdexcept>

namespace ctr {

Actuation sample_actuation(const ActuationDomain& domain, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Actuation a;
  a.beta[2] = domain.beta3_min * unit(rng);
  a.beta[1] = a.beta[2] - domain.beta2_span * unit(rng);
  a.beta[0] = a.beta[1] - domain.beta1_span * unit(rng);
  for (double& al : a.alpha) al = domain.alpha_limit * (2.0 * unit(rng) - 1.0);
  return a;
}

CollocationSet sample_collocation(int n, const RobotSpec& robot, const ActuationDomain& domain,
                                  std::mt19937_64& rng) {
  if (n <= 0) throw std::invalid_argument("sample_collocation: n must be positive");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  CollocationSet set;
  set.s.reserve(static_cast<std::size_t>(n));
  set.act.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const Actuation a = sample_actuation(domain, rng);
    const double l1 = robot.tubes[0].length() + a.beta[0];
    set.act.push_back(a);
    set.s.push_back(l1 * unit(rng));
  }
  return set;
}

BoundarySet sample_boundary(int n, const ActuationDomain& domain, std::mt19937_64& rng) {
  if (n <= 0) throw std::invalid_argument("sample_boundary: n must be positive");
  BoundarySet set;
  set.act.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) set.act.push_back(sample_actuation(domain, rng));
  return set;
}

}  // namespace ctr
