#pragma once

#include <array>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "ctr/rod.hpp"

namespace ctr {

inline constexpr int kInputDim = 7;  // [s, beta1..3, alpha1..3]

/// Affine map of raw inputs onto [-1, 1]: z = (x - center) * scale.
struct InputMap {
  std::array<double, kInputDim> center{};
  std::array<double, kInputDim> scale{};
};

/// Per-output de-scaling: state = offset + scale * y, multiplied by s / L_max
/// for outputs pinned to zero at the base.
struct OutputMap {
  std::array<double, kStateDim> offset{};
  std::array<double, kStateDim> scale{};
  std::array<bool, kStateDim> zero_at_base{};
};

InputMap make_input_map(double max_length, const ActuationDomain& domain);
/// Moments by sum(E I kappa), torsion by max kappa, position by L1; angles and
/// quaternion unscaled. Position is pinned to zero at the base.
OutputMap make_output_map(const RobotSpec& robot);

/// Scratch storage for one batched pass. When the arc-length tangent is
/// propagated, each activation matrix holds [values | d/ds] side by side.
struct BatchWork {
  std::vector<Eigen::MatrixXd> act;  // per layer, input layer first
  Eigen::MatrixXd state;             // 15 x B, physical units
  Eigen::MatrixXd dstate;            // 15 x B, d state / ds (tangent passes only)
  Eigen::ArrayXd ramp;               // s / L_max per column
  Eigen::Index batch = 0;
  bool tangent = false;
};

/// tanh MLP [7] -> hidden... -> [15] with stored normalization maps.
/// Parameters live in one flat vector: per layer W (column-major), then b.
class Network {
 public:
  Network() = default;
  Network(std::vector<int> hidden, InputMap in, OutputMap out);

  /// Six hidden layers of 100 units, maps derived from robot and domain.
  static Network for_robot(const RobotSpec& robot, const ActuationDomain& domain,
                           std::vector<int> hidden = {100, 100, 100, 100, 100, 100});

  [[nodiscard]] const std::vector<int>& widths() const { return widths_; }
  [[nodiscard]] int num_layers() const { return static_cast<int>(widths_.size()) - 1; }
  [[nodiscard]] Eigen::Index num_params() const { return params_.size(); }
  [[nodiscard]] const Eigen::VectorXd& params() const { return params_; }
  Eigen::VectorXd& params() { return params_; }
  [[nodiscard]] const InputMap& input_map() const { return in_; }
  [[nodiscard]] const OutputMap& output_map() const { return out_; }

  [[nodiscard]] Eigen::Map<const Eigen::MatrixXd> weight(int layer) const;
  [[nodiscard]] Eigen::Map<const Eigen::VectorXd> bias(int layer) const;
  Eigen::Map<Eigen::MatrixXd> weight(int layer);
  Eigen::Map<Eigen::VectorXd> bias(int layer);
  [[nodiscard]] Eigen::Index weight_offset(int layer) const { return offsets_[layer]; }

  /// Xavier-uniform weights, zero biases.
  void initialize_xavier(std::mt19937_64& rng);

  [[nodiscard]] RodState forward(double s, const Actuation& act) const;
  /// State and its exact arc-length derivative (forward-mode tangent).
  [[nodiscard]] std::pair<RodState, StateVector> forward_with_s_derivative(
      double s, const Actuation& act) const;

  /// Raw inputs (7 x B) through the network; results in work.state / work.dstate.
  void forward_batch(const Eigen::Ref<const Eigen::MatrixXd>& inputs, bool tangent,
                     BatchWork& work) const;
  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(state) and,
  /// for tangent passes, d(loss)/d(dstate).
  void backward_batch(const BatchWork& work, const Eigen::Ref<const Eigen::MatrixXd>& g_state,
                      const Eigen::MatrixXd* g_dstate, Eigen::Ref<Eigen::VectorXd> grad) const;

  /// States along a backbone for one actuation, 15 x s.size().
  [[nodiscard]] Eigen::MatrixXd evaluate_backbone(const Actuation& act,
                                                  std::span<const double> s) const;

  // Provenance carried in the weight file.
  std::string robot_hash;
  ActuationDomain domain;
  nlohmann::json provenance = nlohmann::json::array();

 private:
  void build_offsets();

  std::vector<int> widths_;
  std::vector<Eigen::Index> offsets_;
  Eigen::VectorXd params_;
  InputMap in_;
  OutputMap out_;
};

Eigen::Matrix<double, kInputDim, 1> network_input(double s, const Actuation& act);

/// Versioned JSON weight file.
void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);
nlohmann::json network_to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);

}  // namespace ctr
