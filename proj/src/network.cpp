#include "ctr/network.hpp"

#include <fstream>
#include <stdexcept>

#include "ctr/lbfgs.hpp"

namespace ctr {

InputMap make_input_map(double max_length, const ActuationDomain& domain) {
  InputMap m;
  const auto lo = domain.lower_bounds();
  const auto hi = domain.upper_bounds();
  m.center[0] = 0.5 * max_length;
  m.scale[0] = 2.0 / max_length;
  for (int k = 0; k < 6; ++k) {
    m.center[1 + k] = 0.5 * (lo[k] + hi[k]);
    m.scale[1 + k] = 2.0 / (hi[k] - lo[k]);
  }
  return m;
}

OutputMap make_output_map(const RobotSpec& robot) {
  OutputMap m;
  std::array<double, kNumGroups> group_scale{robot.characteristic_moment(),
                                             robot.max_precurvature(), 1.0, robot.max_length(),
                                             1.0};
  // A robot without pre-curvature has no natural moment or torsion scale.
  for (double& g : group_scale)
    if (!(g > 0.0)) g = 1.0;
  for (int g = 0; g < kNumGroups; ++g)
    for (int k = 0; k < kGroupSize[g]; ++k) m.scale[kGroupOffset[g] + k] = group_scale[g];
  for (int k = 0; k < 3; ++k) m.zero_at_base[idx::p + k] = true;
  return m;
}

Network::Network(std::vector<int> hidden, InputMap in, OutputMap out)
    : in_(in), out_(out) {
  widths_.push_back(kInputDim);
  for (int w : hidden) {
    if (w <= 0) throw std::invalid_argument("hidden layer width must be positive");
    widths_.push_back(w);
  }
  widths_.push_back(kStateDim);
  build_offsets();
  params_ = Eigen::VectorXd::Zero(offsets_.back());
}

Network Network::for_robot(const RobotSpec& robot, const ActuationDomain& domain,
                           std::vector<int> hidden) {
  Network net(std::move(hidden), make_input_map(robot.max_length(), domain),
              make_output_map(robot));
  net.domain = domain;
  return net;
}

void Network::build_offsets() {
  offsets_.clear();
  Eigen::Index off = 0;
  for (int l = 0; l < num_layers(); ++l) {
    offsets_.push_back(off);
    off += static_cast<Eigen::Index>(widths_[l + 1]) * (widths_[l] + 1);
  }
  offsets_.push_back(off);
}

Eigen::Map<const Eigen::MatrixXd> Network::weight(int l) const {
  return {params_.data() + offsets_[l], widths_[l + 1], widths_[l]};
}
Eigen::Map<const Eigen::VectorXd> Network::bias(int l) const {
  return {params_.data() + offsets_[l] + static_cast<Eigen::Index>(widths_[l + 1]) * widths_[l],
          widths_[l + 1]};
}
Eigen::Map<Eigen::MatrixXd> Network::weight(int l) {
  return {params_.data() + offsets_[l], widths_[l + 1], widths_[l]};
}
Eigen::Map<Eigen::VectorXd> Network::bias(int l) {
  return {params_.data() + offsets_[l] + static_cast<Eigen::Index>(widths_[l + 1]) * widths_[l],
          widths_[l + 1]};
}

void Network::initialize_xavier(std::mt19937_64& rng) {
  for (int l = 0; l < num_layers(); ++l) {
    weight(l) = xavier_uniform(widths_[l], widths_[l + 1], rng);
    bias(l).setZero();
  }
}

Eigen::Matrix<double, kInputDim, 1> network_input(double s, const Actuation& act) {
  Eigen::Matrix<double, kInputDim, 1> v;
  v << s, act.beta[0], act.beta[1], act.beta[2], act.alpha[0], act.alpha[1], act.alpha[2];
  return v;
}

void Network::forward_batch(const Eigen::Ref<const Eigen::MatrixXd>& inputs, bool tangent,
                            BatchWork& work) const {
  const Eigen::Index B = inputs.cols();
  const Eigen::Index cols = tangent ? 2 * B : B;
  const int L = num_layers();
  work.batch = B;
  work.tangent = tangent;
  work.act.resize(static_cast<std::size_t>(L));

  Eigen::MatrixXd& z0 = work.act[0];
  z0.resize(kInputDim, cols);
  for (int r = 0; r < kInputDim; ++r)
    z0.row(r).head(B) = (inputs.row(r).array() - in_.center[r]) * in_.scale[r];
  if (tangent) {
    z0.rightCols(B).setZero();
    z0.row(0).tail(B).setConstant(in_.scale[0]);
  }

  Eigen::MatrixXd pre;
  for (int l = 0; l < L; ++l) {
    const auto W = weight(l);
    const auto b = bias(l);
    pre.noalias() = W * work.act[static_cast<std::size_t>(l)];
    pre.leftCols(B).colwise() += b;
    if (l + 1 == L) break;
    Eigen::MatrixXd& z = work.act[static_cast<std::size_t>(l + 1)];
    z.resize(widths_[l + 1], cols);
    z.leftCols(B) = pre.leftCols(B).array().tanh();
    if (tangent)
      z.rightCols(B) = (1.0 - z.leftCols(B).array().square()) * pre.rightCols(B).array();
  }

  const Eigen::Map<const Eigen::ArrayXd> off(out_.offset.data(), kStateDim);
  const Eigen::Map<const Eigen::ArrayXd> sc(out_.scale.data(), kStateDim);
  work.state = (pre.leftCols(B).array().colwise() * sc).colwise() + off;
  if (tangent) work.dstate = pre.rightCols(B).array().colwise() * sc;
  work.ramp = inputs.row(0).transpose().array() * (0.5 * in_.scale[0]);
  for (int k = 0; k < kStateDim; ++k) {
    if (!out_.zero_at_base[k]) continue;
    if (tangent)
      work.dstate.row(k) = work.dstate.row(k).array() * work.ramp.transpose() +
                           work.state.row(k).array() * (0.5 * in_.scale[0]);
    work.state.row(k).array() *= work.ramp.transpose();
  }
}

void Network::backward_batch(const BatchWork& work, const Eigen::Ref<const Eigen::MatrixXd>& g_state,
                             const Eigen::MatrixXd* g_dstate,
                             Eigen::Ref<Eigen::VectorXd> grad) const {
  const Eigen::Index B = work.batch;
  const bool tangent = work.tangent && g_dstate != nullptr;
  const Eigen::Index cols = work.tangent ? 2 * B : B;
  const int L = num_layers();
  const Eigen::Map<const Eigen::ArrayXd> sc(out_.scale.data(), kStateDim);

  // Adjoint of the output pre-activation, [g_y | g_ydot].
  Eigen::MatrixXd G(kStateDim, cols);
  G.leftCols(B) = g_state;
  if (work.tangent) {
    if (tangent)
      G.rightCols(B) = *g_dstate;
    else
      G.rightCols(B).setZero();
  }
  const double slope = 0.5 * in_.scale[0];
  for (int k = 0; k < kStateDim; ++k) {
    if (!out_.zero_at_base[k]) continue;
    // x = r y, x' = r y' + r' y
    G.row(k).head(B).array() *= work.ramp.transpose();
    if (tangent) {
      G.row(k).head(B) += slope * g_dstate->row(k);
      G.row(k).tail(B).array() *= work.ramp.transpose();
    }
  }
  G.leftCols(B).array().colwise() *= sc;
  if (work.tangent) G.rightCols(B).array().colwise() *= sc;

  Eigen::MatrixXd Gprev;
  for (int l = L - 1; l >= 0; --l) {
    const Eigen::MatrixXd& zin = work.act[static_cast<std::size_t>(l)];
    const Eigen::Index n_out = widths_[l + 1];
    const Eigen::Index n_in = widths_[l];
    Eigen::Map<Eigen::MatrixXd> gW(grad.data() + offsets_[l], n_out, n_in);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + offsets_[l] + n_out * n_in, n_out);

    if (l + 1 < L) {
      // G holds [g_z | g_zdot] of this tanh layer's output; convert to
      // pre-activation adjoints.
      const Eigen::MatrixXd& z = work.act[static_cast<std::size_t>(l + 1)];
      const auto zv = z.leftCols(B).array();
      const Eigen::ArrayXXd d = 1.0 - zv.square();
      if (work.tangent) {
        const auto zd = z.rightCols(B).array();
        const Eigen::ArrayXXd gzd = G.rightCols(B).array();
        G.leftCols(B) = d * G.leftCols(B).array() - 2.0 * zv * zd * gzd;
        G.rightCols(B) = d * gzd;
      } else {
        G.leftCols(B).array() *= d;
      }
    }

    gW.noalias() += G * zin.transpose();
    gb += G.leftCols(B).rowwise().sum();
    if (l > 0) {
      Gprev.noalias() = weight(l).transpose() * G;
      std::swap(G, Gprev);
    }
  }
}

RodState Network::forward(double s, const Actuation& act) const {
  BatchWork work;
  forward_batch(network_input(s, act), false, work);
  return RodState(work.state.col(0));
}

std::pair<RodState, StateVector> Network::forward_with_s_derivative(double s,
                                                                    const Actuation& act) const {
  BatchWork work;
  forward_batch(network_input(s, act), true, work);
  return {RodState(work.state.col(0)), work.dstate.col(0)};
}

Eigen::MatrixXd Network::evaluate_backbone(const Actuation& act, std::span<const double> s) const {
  Eigen::MatrixXd inputs(kInputDim, static_cast<Eigen::Index>(s.size()));
  const auto base = network_input(0.0, act);
  for (Eigen::Index k = 0; k < inputs.cols(); ++k) {
    inputs.col(k) = base;
    inputs(0, k) = s[static_cast<std::size_t>(k)];
  }
  BatchWork work;
  forward_batch(inputs, false, work);
  return work.state;
}

// ---------------------------------------------------------------------------

namespace {
constexpr const char* kFormat = "ctr-pinn-weights";
constexpr int kVersion = 1;
}  // namespace

nlohmann::json network_to_json(const Network& net) {
  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["widths"] = net.widths();
  j["activation"] = "tanh";
  j["input_map"] = {{"center", net.input_map().center}, {"scale", net.input_map().scale}};
  j["output_map"] = {{"offset", net.output_map().offset},
                     {"scale", net.output_map().scale},
                     {"zero_at_base", net.output_map().zero_at_base}};
  j["robot_hash"] = net.robot_hash;
  j["domain"] = {{"beta3_min", net.domain.beta3_min},
                 {"beta2_span", net.domain.beta2_span},
                 {"beta1_span", net.domain.beta1_span},
                 {"alpha_limit", net.domain.alpha_limit}};
  j["provenance"] = net.provenance;
  j["params"] = std::vector<double>(net.params().data(), net.params().data() + net.params().size());
  return j;
}

Network network_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kFormat) throw std::runtime_error("not a ctr-pinn weight file");
  if (j.at("version").get<int>() != kVersion)
    throw std::runtime_error("unsupported weight file version " + j.at("version").dump());
  const auto widths = j.at("widths").get<std::vector<int>>();
  if (widths.size() < 2 || widths.front() != kInputDim || widths.back() != kStateDim)
    throw std::runtime_error("weight file has incompatible layer widths");
  InputMap in;
  in.center = j.at("input_map").at("center").get<std::array<double, kInputDim>>();
  in.scale = j.at("input_map").at("scale").get<std::array<double, kInputDim>>();
  OutputMap out;
  out.offset = j.at("output_map").at("offset").get<std::array<double, kStateDim>>();
  out.scale = j.at("output_map").at("scale").get<std::array<double, kStateDim>>();
  if (j.at("output_map").contains("zero_at_base"))
    out.zero_at_base = j.at("output_map").at("zero_at_base").get<std::array<bool, kStateDim>>();

  Network net(std::vector<int>(widths.begin() + 1, widths.end() - 1), in, out);
  const auto params = j.at("params").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(params.size()) != net.num_params())
    throw std::runtime_error("weight file parameter count does not match its layer widths");
  net.params() = Eigen::Map<const Eigen::VectorXd>(params.data(), net.num_params());
  net.robot_hash = j.value("robot_hash", "");
  if (j.contains("domain")) {
    const auto& d = j["domain"];
    net.domain.beta3_min = d.at("beta3_min");
    net.domain.beta2_span = d.at("beta2_span");
    net.domain.beta1_span = d.at("beta1_span");
    net.domain.alpha_limit = d.at("alpha_limit");
  }
  net.provenance = j.value("provenance", nlohmann::json::array());
  return net;
}

void save_network(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << network_to_json(net).dump(1) << '\n';
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open weight file " + path.string());
  return network_from_json(nlohmann::json::parse(in));
}

}  // namespace ctr
