#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ctr/network.hpp"
#include "ctr/rod.hpp"
#include "ctr/sampling.hpp"

namespace ctr {

/// Per-group weights, groups ordered {m, u, theta, p, h}.
struct LossWeights {
  std::array<double, kNumGroups> ode{0.1, 0.1, 1.0, 1.0, 1.0};
  std::array<double, kNumGroups> bc{0.1, 0.1, 1.0, 1.0, 1.0};
  double obs = 10.0;

  void validate() const;
};

/// Residuals are measured in network units: state groups divided by their
/// output scale, and for the rod equations multiplied by L1 (so d/ds is taken
/// per unit normalized arc-length).
struct ResidualScales {
  std::array<double, kNumGroups> state{};  // output scale of each group
  double length = 1.0;                     // L1
  static ResidualScales from(const RobotSpec& robot);
};

struct LossValue {
  double value = 0.0;
  std::array<double, kNumGroups> groups{};  // weighted, already averaged
  long network_evaluations = 0;             // input columns pushed through the net
};

/// Collocation points with their segment tables resolved.
struct PreparedCollocation {
  Eigen::MatrixXd inputs;  // 7 x N
  std::vector<SegmentProps> segments;
  [[nodiscard]] Eigen::Index size() const { return inputs.cols(); }
};
/// Boundary actuations, expanded to 4 columns each: s = 0, l3, l2, l1.
struct PreparedBoundary {
  Eigen::MatrixXd inputs;  // 7 x 4N
  std::vector<Actuation> act;
  [[nodiscard]] Eigen::Index size() const { return static_cast<Eigen::Index>(act.size()); }
};
struct PreparedObservations {
  Eigen::MatrixXd inputs;  // 7 x N
  Eigen::MatrixXd target;  // 3 x N
  [[nodiscard]] Eigen::Index size() const { return inputs.cols(); }
};

PreparedCollocation prepare(const RobotSpec& robot, const CollocationSet& set,
                            const ActuationDomain& domain);
PreparedBoundary prepare(const RobotSpec& robot, const BoundarySet& set,
                         const ActuationDomain& domain);
PreparedObservations prepare(const ObservationSet& set);

/// Per point, a group contributes lambda * |e_g| (euclidean) or lambda * |e_g|^2.
enum class LossNorm { euclidean, squared };
const char* to_string(LossNorm n);
LossNorm loss_norm_from_string(const std::string& s);

struct LossContext {
  ResidualScales scales;
  LossWeights weights;
  LossNorm norm = LossNorm::euclidean;
  int threads = 1;
  /// Columns per batched network pass.
  Eigen::Index chunk = 256;
};

/// Mean over points of sum_g lambda_g |e_g| with e = d(x)/ds - f(x).
/// When `grad` is non-null the weight gradient is added to it.
LossValue loss_ode(const Network& net, const PreparedCollocation& set, const LossContext& ctx,
                   Eigen::VectorXd* grad = nullptr);
LossValue loss_bc(const Network& net, const PreparedBoundary& set, const LossContext& ctx,
                  Eigen::VectorXd* grad = nullptr);
/// Empty sets contribute 0.
LossValue loss_obs(const Network& net, const PreparedObservations& set, const LossContext& ctx,
                   Eigen::VectorXd* grad = nullptr);

/// Any model exposing state and d/ds (used to score reference solutions).
using StateDerivativeModel =
    std::function<std::pair<StateVector, StateVector>(double s, const Actuation& act)>;
LossValue loss_ode_of_model(const StateDerivativeModel& model, const CollocationSet& set,
                            const RobotSpec& robot, const ActuationDomain& domain,
                            const LossContext& ctx);
using StateModel = std::function<StateVector(double s, const Actuation& act)>;
LossValue loss_bc_of_model(const StateModel& model, const BoundarySet& set, const RobotSpec& robot,
                           const ActuationDomain& domain, const LossContext& ctx);

/// Weighted ODE residual of one point; optionally d/dx and d/d(dx).
double ode_point_loss(const StateVector& x, const StateVector& dx, const SegmentProps& seg,
                      const LossContext& ctx, StateVector* g_x, StateVector* g_dx,
                      std::array<double, kNumGroups>* groups);

struct LossBreakdown {
  LossValue ode, bc, obs;
  [[nodiscard]] double total() const { return ode.value + bc.value + obs.value; }
};

/// Composite training objective over fixed sample sets.
class PinnObjective {
 public:
  PinnObjective(Network prototype, PreparedCollocation colloc, PreparedBoundary boundary,
                PreparedObservations obs, LossContext ctx);

  /// Loss at `params`, writing the gradient. Also records the breakdown.
  double operator()(const Eigen::VectorXd& params, Eigen::VectorXd& grad);
  [[nodiscard]] LossBreakdown evaluate(const Network& net, Eigen::VectorXd* grad) const;

  [[nodiscard]] const LossBreakdown& last() const { return last_; }
  [[nodiscard]] const Network& network() const { return net_; }
  [[nodiscard]] const LossContext& context() const { return ctx_; }

 private:
  Network net_;
  PreparedCollocation colloc_;
  PreparedBoundary boundary_;
  PreparedObservations obs_;
  LossContext ctx_;
  LossBreakdown last_;
};

}  // namespace ctr
