#include <doctest.h>

#include <filesystem>
#include <random>

#include "ctr/network.hpp"
#include "ctr/sampling.hpp"
#include "support.hpp"

using namespace ctr;
using ctr::testing::table1;

namespace {

Network small_net(std::uint64_t seed, std::vector<int> hidden = {8, 8}) {
  Network net = Network::for_robot(table1(), ActuationDomain{}, std::move(hidden));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.7);
  for (Eigen::Index k = 0; k < net.num_params(); ++k) net.params()[k] = n(rng);
  return net;
}

double central_rel_error(const Network& net, double s, const Actuation& a) {
  const double h = 1e-6 * table1().max_length();
  const auto [x, dx] = net.forward_with_s_derivative(s, a);
  const StateVector fd = (net.forward(s + h, a).x - net.forward(s - h, a).x) / (2 * h);
  return (fd - dx).norm() / dx.norm();
}

}  // namespace

TEST_CASE("zero weights give the de-scaled bias, with zero derivative") {
  Network net = Network::for_robot(table1(), ActuationDomain{}, {8, 8});
  const int last = net.num_layers() - 1;
  for (int k = 0; k < kStateDim; ++k) net.bias(last)[k] = 0.01 * (k + 1);
  const Actuation a{{-0.01, -0.008, -0.002}, {0.5, -1.0, 2.0}};
  const double s = 0.1, L = table1().max_length();
  const auto [x, dx] = net.forward_with_s_derivative(s, a);
  for (int k = 0; k < kStateDim; ++k) {
    const double y = net.output_map().offset[k] + net.output_map().scale[k] * 0.01 * (k + 1);
    if (net.output_map().zero_at_base[k]) {
      CHECK(x.x[k] == doctest::Approx(s / L * y).epsilon(1e-14));
      CHECK(dx[k] == doctest::Approx(y / L).epsilon(1e-14));
    } else {
      CHECK(x.x[k] == doctest::Approx(y).epsilon(1e-14));
      CHECK(dx[k] == 0.0);
    }
  }
  const RodState other = net.forward(0.05, Actuation{});
  for (int k = 0; k < kStateDim; ++k)
    if (!net.output_map().zero_at_base[k]) CHECK(other.x[k] == x.x[k]);
}

TEST_CASE("position is exactly zero at the base") {
  std::mt19937_64 rng(21);
  Network net = Network::for_robot(table1(), ActuationDomain{}, {8, 8});
  for (int trial = 0; trial < 20; ++trial) {
    std::normal_distribution<double> n(0.0, 0.7);
    for (Eigen::Index k = 0; k < net.num_params(); ++k) net.params()[k] = n(rng);
    const Actuation a = sample_actuation(ActuationDomain{}, rng);
    CHECK(net.forward(0.0, a).p().norm() == 0.0);
    CHECK(net.forward(0.01, a).p().norm() > 0.0);
  }
  const OutputMap m = make_output_map(table1());
  for (int k = 0; k < kStateDim; ++k) CHECK(m.zero_at_base[k] == (k >= idx::p && k < idx::p + 3));
}

TEST_CASE("output map scales") {
  const RobotSpec r = table1();
  const OutputMap m = make_output_map(r);
  CHECK(m.scale[idx::m] == doctest::Approx(r.characteristic_moment()));
  CHECK(m.scale[idx::uz] == 28.0);
  CHECK(m.scale[idx::theta] == 1.0);
  CHECK(m.scale[idx::p] == doctest::Approx(0.21));
  CHECK(m.scale[idx::h + 3] == 1.0);
  const InputMap in = make_input_map(0.21, ActuationDomain{});
  CHECK((0.0 - in.center[0]) * in.scale[0] == doctest::Approx(-1.0));
  CHECK((0.21 - in.center[0]) * in.scale[0] == doctest::Approx(1.0));
}

TEST_CASE("forward pass is deterministic") {
  const Network net = small_net(1);
  const Actuation a{{-0.01, -0.008, -0.002}, {0.5, -1.0, 2.0}};
  const RodState x1 = net.forward(0.07, a), x2 = net.forward(0.07, a);
  CHECK(x1.x == x2.x);
  const std::vector<double> s{0.0, 0.07, 0.15};
  const Eigen::MatrixXd b = net.evaluate_backbone(a, s);
  CHECK((b.col(1) - x1.x).norm() < 1e-14);
}

TEST_CASE("single linear layer derivative") {
  Network net = Network::for_robot(table1(), ActuationDomain{}, {});
  std::mt19937_64 rng(2);
  net.initialize_xavier(rng);
  const double s = 0.05, L = table1().max_length();
  const auto [x, dx] = net.forward_with_s_derivative(s, Actuation{});
  for (int k = 0; k < kStateDim; ++k) {
    const double slope = net.output_map().scale[k] * net.weight(0)(k, 0) * net.input_map().scale[0];
    if (net.output_map().zero_at_base[k]) {
      // x = (s / L) y: product rule
      CHECK(dx[k] == doctest::Approx(x.x[k] / s + s / L * slope).epsilon(1e-12));
    } else {
      CHECK(dx[k] == doctest::Approx(slope).epsilon(1e-13));
    }
  }
}

TEST_CASE("forward-mode d/ds matches central differences") {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Network net = small_net(100 + trial);
    const Actuation a = sample_actuation(ActuationDomain{}, rng);
    std::uniform_real_distribution<double> us(0.01, 0.19);
    worst = std::max(worst, central_rel_error(net, us(rng), a));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("batched tangent pass agrees with the single-point pass") {
  const Network net = small_net(4, {16, 16, 16});
  std::mt19937_64 rng(9);
  Eigen::MatrixXd in(kInputDim, 5);
  std::vector<std::pair<double, Actuation>> pts;
  for (int c = 0; c < 5; ++c) {
    const Actuation a = sample_actuation(ActuationDomain{}, rng);
    pts.emplace_back(0.03 * (c + 1), a);
    in.col(c) = network_input(0.03 * (c + 1), a);
  }
  BatchWork w;
  net.forward_batch(in, true, w);
  for (int c = 0; c < 5; ++c) {
    const auto [x, dx] = net.forward_with_s_derivative(pts[c].first, pts[c].second);
    CHECK((w.state.col(c) - x.x).norm() < 1e-12);
    CHECK((w.dstate.col(c) - dx).norm() < 1e-10 * std::max(1.0, dx.norm()));
  }
}

TEST_CASE("backward pass matches finite differences of a linear functional") {
  Network net = small_net(5);
  std::mt19937_64 rng(11);
  Eigen::MatrixXd in(kInputDim, 3);
  for (int c = 0; c < 3; ++c) in.col(c) = network_input(0.05 * (c + 1), sample_actuation({}, rng));
  Eigen::MatrixXd gs = Eigen::MatrixXd::Random(kStateDim, 3);
  Eigen::MatrixXd gd = Eigen::MatrixXd::Random(kStateDim, 3);
  auto functional = [&](const Network& n) {
    BatchWork w;
    n.forward_batch(in, true, w);
    return (gs.array() * w.state.array()).sum() + (gd.array() * w.dstate.array()).sum();
  };
  BatchWork w;
  net.forward_batch(in, true, w);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.num_params());
  net.backward_batch(w, gs, &gd, grad);
  double worst = 0.0;
  for (Eigen::Index k = 0; k < net.num_params(); k += 3) {
    const double p0 = net.params()[k];
    const double h = 1e-6;
    net.params()[k] = p0 + h;
    const double fp = functional(net);
    net.params()[k] = p0 - h;
    const double fm = functional(net);
    net.params()[k] = p0;
    const double fd = (fp - fm) / (2 * h);
    worst = std::max(worst, std::abs(fd - grad[k]) / std::max(1.0, std::abs(grad[k])));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("weight file round trip") {
  Network net = small_net(6);
  net.robot_hash = robot_hash(table1());
  net.domain.alpha_limit = 1.0;
  net.provenance.push_back({{"stage", "synthetic"}});
  const auto path = std::filesystem::temp_directory_path() / "ctr_test_net.json";
  save_network(net, path);
  const Network back = load_network(path);
  std::filesystem::remove(path);
  CHECK(back.params() == net.params());
  CHECK(back.widths() == net.widths());
  CHECK(back.robot_hash == net.robot_hash);
  CHECK(back.domain == net.domain);
  CHECK(back.provenance == net.provenance);
  const Actuation a{{-0.01, -0.008, -0.002}, {0.5, -1.0, 2.0}};
  CHECK(back.forward(0.1, a).x == net.forward(0.1, a).x);

  nlohmann::json j = network_to_json(net);
  j["params"].erase(0);
  CHECK_THROWS(network_from_json(j));
  j = network_to_json(net);
  j["format"] = "other";
  CHECK_THROWS(network_from_json(j));
}
