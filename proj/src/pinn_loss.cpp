#include "ctr/pinn_loss.hpp"

#include <cmath>
#include <stdexcept>
#include <thread>

#include "ctr/dual.hpp"

namespace ctr {

void LossWeights::validate() const {
  bool any = obs > 0.0;
  if (obs < 0.0) throw std::invalid_argument("loss weights must be nonnegative");
  for (int g = 0; g < kNumGroups; ++g) {
    if (ode[g] < 0.0 || bc[g] < 0.0) throw std::invalid_argument("loss weights must be nonnegative");
    any = any || ode[g] > 0.0 || bc[g] > 0.0;
  }
  if (!any) throw std::invalid_argument("at least one loss weight must be positive");
}

const char* to_string(LossNorm n) { return n == LossNorm::euclidean ? "euclidean" : "squared"; }

LossNorm loss_norm_from_string(const std::string& s) {
  if (s == "euclidean") return LossNorm::euclidean;
  if (s == "squared") return LossNorm::squared;
  throw std::invalid_argument("unknown loss norm '" + s + "'");
}

ResidualScales ResidualScales::from(const RobotSpec& robot) {
  ResidualScales r;
  const OutputMap out = make_output_map(robot);
  for (int g = 0; g < kNumGroups; ++g) r.state[g] = out.scale[kGroupOffset[g]];
  r.length = robot.max_length();
  return r;
}

namespace {

constexpr std::array<int, kStateDim> kGroupOf{0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3, 4, 4, 4, 4};

// Weighted contribution of a group with squared residual norm `sq`; `dfac` is
// the factor with d(term)/de_k = dfac * e_k.
double group_term(LossNorm norm, double lam, double sq, double& dfac) {
  if (norm == LossNorm::squared) {
    dfac = 2.0 * lam;
    return lam * sq;
  }
  const double n = std::sqrt(sq);
  dfac = n > 0.0 ? lam / n : 0.0;
  return lam * n;
}

// Boundary residual entries of one actuation, in network units.
struct BcEntry {
  int group;
  double e;      // scaled residual
  double scale;  // output scale of the group
  int col;       // 0: s = 0, 1: l3, 2: l2, 3: l1
  int comp;
};

std::vector<BcEntry> bc_entries(const Actuation& act, const StateVector& x0, const StateVector& x3,
                                const StateVector& x2, const StateVector& x1,
                                const std::array<double, kNumGroups>& sc) {
  std::vector<BcEntry> out;
  out.reserve(15);
  for (int k = 0; k < 2; ++k) out.push_back({0, x1[idx::m + k] / sc[0], sc[0], 3, idx::m + k});
  out.push_back({1, x1[idx::uz + 0] / sc[1], sc[1], 3, idx::uz + 0});
  out.push_back({1, x2[idx::uz + 1] / sc[1], sc[1], 2, idx::uz + 1});
  out.push_back({1, x3[idx::uz + 2] / sc[1], sc[1], 1, idx::uz + 2});
  // Proximal twist and orientation follow the network's own u_z(0).
  const double base = act.alpha[0] - act.beta[0] * x0[idx::uz + 0];
  for (int i = 0; i < 3; ++i) {
    const double th = i == 0 ? 0.0 : act.alpha[i] - act.beta[i] * x0[idx::uz + i] - base;
    out.push_back({2, (x0[idx::theta + i] - th) / sc[2], sc[2], 0, idx::theta + i});
  }
  for (int k = 0; k < 3; ++k) out.push_back({3, x0[idx::p + k] / sc[3], sc[3], 0, idx::p + k});
  const Eigen::Vector4d q = quat_rot_z(base);
  for (int k = 0; k < 4; ++k) out.push_back({4, (x0[idx::h + k] - q[k]) / sc[4], sc[4], 0, idx::h + k});
  return out;
}

/// Adds the weighted group terms of `entries`; returns d(loss)/de per entry.
std::vector<double> add_bc_terms(const std::vector<BcEntry>& entries, const LossContext& ctx,
                                 LossValue& v) {
  std::array<double, kNumGroups> sq{}, dfac{};
  for (const BcEntry& en : entries) sq[en.group] += en.e * en.e;
  for (int g = 0; g < kNumGroups; ++g) {
    const double t = group_term(ctx.norm, ctx.weights.bc[g], sq[g], dfac[g]);
    v.value += t;
    v.groups[g] += t;
  }
  std::vector<double> d(entries.size());
  for (std::size_t k = 0; k < entries.size(); ++k) d[k] = dfac[entries[k].group] * entries[k].e;
  return d;
}

// Splits [0, n) into chunks, evaluates them (possibly on several threads) and
// reduces in chunk order, so results do not depend on the thread count.
template <class ChunkFn>
LossValue run_chunked(Eigen::Index n, Eigen::Index chunk, int threads, Eigen::Index n_params,
                      Eigen::VectorXd* grad, ChunkFn&& fn) {
  const Eigen::Index n_chunks = (n + chunk - 1) / chunk;
  std::vector<LossValue> parts(static_cast<std::size_t>(n_chunks));
  std::vector<Eigen::VectorXd> grads(grad ? static_cast<std::size_t>(n_chunks) : 0);

  auto work = [&](int worker, int n_workers) {
    for (Eigen::Index c = worker; c < n_chunks; c += n_workers) {
      const Eigen::Index b = c * chunk;
      const Eigen::Index e = std::min(n, b + chunk);
      Eigen::VectorXd* g = nullptr;
      if (grad) {
        grads[static_cast<std::size_t>(c)] = Eigen::VectorXd::Zero(n_params);
        g = &grads[static_cast<std::size_t>(c)];
      }
      parts[static_cast<std::size_t>(c)] = fn(b, e, g);
    }
  };
  const int n_workers = std::max(1, std::min<int>(threads, static_cast<int>(n_chunks)));
  if (n_workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(work, w, n_workers);
  }

  LossValue total;
  for (std::size_t c = 0; c < parts.size(); ++c) {
    total.value += parts[c].value;
    for (int g = 0; g < kNumGroups; ++g) total.groups[g] += parts[c].groups[g];
    total.network_evaluations += parts[c].network_evaluations;
    if (grad) *grad += grads[c];
  }
  return total;
}

Eigen::Matrix<double, kInputDim, 1> input_column(double s, const Actuation& a) {
  return network_input(s, a);
}

}  // namespace

double ode_point_loss(const StateVector& x, const StateVector& dx, const SegmentProps& seg,
                      const LossContext& ctx, StateVector* g_x, StateVector* g_dx,
                      std::array<double, kNumGroups>* groups) {
  using D = Dual<kStateDim>;
  std::array<D, kStateDim> xs;
  for (int k = 0; k < kStateDim; ++k) xs[k] = D::variable(x[k], static_cast<std::size_t>(k));
  std::array<D, kStateDim> f;
  rod_derivative(xs, seg, f);

  StateVector es;
  std::array<double, kNumGroups> sq{}, dfac{};
  for (int i = 0; i < kStateDim; ++i) {
    const int g = kGroupOf[i];
    es[i] = ctx.scales.length / ctx.scales.state[g] * (dx[i] - f[i].val);
    sq[g] += es[i] * es[i];
  }
  double loss = 0.0;
  for (int g = 0; g < kNumGroups; ++g) {
    const double term = group_term(ctx.norm, ctx.weights.ode[g], sq[g], dfac[g]);
    loss += term;
    if (groups) (*groups)[g] += term;
  }
  StateVector w;
  for (int i = 0; i < kStateDim; ++i) {
    const int g = kGroupOf[i];
    w[i] = dfac[g] * es[i] * ctx.scales.length / ctx.scales.state[g];
  }
  if (g_dx) *g_dx = w;
  if (g_x) {
    for (int k = 0; k < kStateDim; ++k) {
      double acc = 0.0;
      for (int i = 0; i < kStateDim; ++i) acc -= w[i] * f[i].d[k];
      (*g_x)[k] = acc;
    }
  }
  return loss;
}

PreparedCollocation prepare(const RobotSpec& robot, const CollocationSet& set,
                            const ActuationDomain& domain) {
  PreparedCollocation p;
  p.inputs.resize(kInputDim, static_cast<Eigen::Index>(set.size()));
  p.segments.reserve(set.size());
  for (std::size_t k = 0; k < set.size(); ++k) {
    const SegmentLayout layout = segment_layout(robot, set.act[k], domain);
    p.segments.push_back(layout.props_at(set.s[k]));
    p.inputs.col(static_cast<Eigen::Index>(k)) = input_column(set.s[k], set.act[k]);
  }
  return p;
}

PreparedBoundary prepare(const RobotSpec& robot, const BoundarySet& set,
                         const ActuationDomain& domain) {
  PreparedBoundary p;
  p.act = set.act;
  p.inputs.resize(kInputDim, 4 * static_cast<Eigen::Index>(set.size()));
  for (std::size_t k = 0; k < set.size(); ++k) {
    const SegmentLayout layout = segment_layout(robot, set.act[k], domain);
    const std::array<double, 4> s{0.0, layout.distal[2], layout.distal[1], layout.distal[0]};
    for (int j = 0; j < 4; ++j)
      p.inputs.col(4 * static_cast<Eigen::Index>(k) + j) = input_column(s[j], set.act[k]);
  }
  return p;
}

PreparedObservations prepare(const ObservationSet& set) {
  PreparedObservations p;
  p.inputs.resize(kInputDim, static_cast<Eigen::Index>(set.size()));
  p.target.resize(3, static_cast<Eigen::Index>(set.size()));
  for (std::size_t k = 0; k < set.size(); ++k) {
    p.inputs.col(static_cast<Eigen::Index>(k)) = input_column(set.s[k], set.act[k]);
    p.target.col(static_cast<Eigen::Index>(k)) = set.p[k];
  }
  return p;
}

LossValue loss_ode(const Network& net, const PreparedCollocation& set, const LossContext& ctx,
                   Eigen::VectorXd* grad) {
  const Eigen::Index n = set.size();
  if (n == 0) throw std::invalid_argument("loss_ode: empty collocation set");
  const double inv_n = 1.0 / static_cast<double>(n);

  return run_chunked(n, ctx.chunk, ctx.threads, net.num_params(), grad,
                     [&](Eigen::Index b, Eigen::Index e, Eigen::VectorXd* g) {
    LossValue part;
    BatchWork work;
    net.forward_batch(set.inputs.middleCols(b, e - b), true, work);
    part.network_evaluations = e - b;
    Eigen::MatrixXd gx(kStateDim, e - b), gdx(kStateDim, e - b);
    StateVector px, pdx;
    for (Eigen::Index j = 0; j < e - b; ++j) {
      part.value += ode_point_loss(work.state.col(j), work.dstate.col(j),
                                   set.segments[static_cast<std::size_t>(b + j)], ctx,
                                   g ? &px : nullptr, g ? &pdx : nullptr, &part.groups);
      if (g) {
        gx.col(j) = px * inv_n;
        gdx.col(j) = pdx * inv_n;
      }
    }
    part.value *= inv_n;
    for (double& v : part.groups) v *= inv_n;
    if (g) net.backward_batch(work, gx, &gdx, *g);
    return part;
  });
}

LossValue loss_bc(const Network& net, const PreparedBoundary& set, const LossContext& ctx,
                  Eigen::VectorXd* grad) {
  const Eigen::Index n = set.size();
  if (n == 0) throw std::invalid_argument("loss_bc: empty boundary set");
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto& sc = ctx.scales.state;
  const Eigen::Index per_chunk = std::max<Eigen::Index>(1, ctx.chunk / 4);

  return run_chunked(n, per_chunk, ctx.threads, net.num_params(), grad,
                     [&](Eigen::Index b, Eigen::Index e, Eigen::VectorXd* g) {
    LossValue part;
    BatchWork work;
    const Eigen::Index m = e - b;
    net.forward_batch(set.inputs.middleCols(4 * b, 4 * m), false, work);
    part.network_evaluations = 4 * m;
    Eigen::MatrixXd gx = Eigen::MatrixXd::Zero(kStateDim, 4 * m);

    for (Eigen::Index a = 0; a < m; ++a) {
      const Actuation& act = set.act[static_cast<std::size_t>(b + a)];
      const auto entries = bc_entries(act, work.state.col(4 * a), work.state.col(4 * a + 1),
                                      work.state.col(4 * a + 2), work.state.col(4 * a + 3), sc);
      const std::vector<double> d = add_bc_terms(entries, ctx, part);
      if (!g) continue;
      const double base = act.alpha[0] - act.beta[0] * work.state(idx::uz, 4 * a);
      const Eigen::Vector4d dq{-0.5 * std::sin(0.5 * base), 0.0, 0.0, 0.5 * std::cos(0.5 * base)};
      double g_base = 0.0;
      std::array<double, 3> g_th{};
      for (std::size_t k = 0; k < entries.size(); ++k) {
        const BcEntry& en = entries[k];
        const double gk = d[k] / en.scale * inv_n;
        gx(en.comp, 4 * a + en.col) += gk;
        if (en.group == 2) g_th[static_cast<std::size_t>(en.comp - idx::theta)] = gk;
        if (en.group == 4) g_base -= gk * dq[en.comp - idx::h];
      }
      // theta0_i = alpha_i - beta_i u_i - base; base = alpha1 - beta1 u1
      g_base += g_th[1] + g_th[2];
      gx(idx::uz + 1, 4 * a) += g_th[1] * act.beta[1];
      gx(idx::uz + 2, 4 * a) += g_th[2] * act.beta[2];
      gx(idx::uz + 0, 4 * a) += g_base * -act.beta[0];
    }
    part.value *= inv_n;
    for (double& v : part.groups) v *= inv_n;
    if (g) net.backward_batch(work, gx, nullptr, *g);
    return part;
  });
}

LossValue loss_obs(const Network& net, const PreparedObservations& set, const LossContext& ctx,
                   Eigen::VectorXd* grad) {
  const Eigen::Index n = set.size();
  if (n == 0) return {};
  const double inv_n = 1.0 / static_cast<double>(n);
  const double lam = ctx.weights.obs;
  const double sc = ctx.scales.state[3];

  return run_chunked(n, ctx.chunk, ctx.threads, net.num_params(), grad,
                     [&](Eigen::Index b, Eigen::Index e, Eigen::VectorXd* g) {
    LossValue part;
    BatchWork work;
    net.forward_batch(set.inputs.middleCols(b, e - b), false, work);
    part.network_evaluations = e - b;
    Eigen::MatrixXd gx = Eigen::MatrixXd::Zero(kStateDim, e - b);
    for (Eigen::Index j = 0; j < e - b; ++j) {
      const Eigen::Vector3d err =
          (work.state.col(j).segment<3>(idx::p) - set.target.col(b + j)) / sc;
      double dfac = 0.0;
      part.value += group_term(ctx.norm, lam, err.squaredNorm(), dfac);
      gx.col(j).segment<3>(idx::p) = dfac * err / sc * inv_n;
    }
    part.value *= inv_n;
    part.groups[3] = part.value;
    if (g) net.backward_batch(work, gx, nullptr, *g);
    return part;
  });
}

LossValue loss_ode_of_model(const StateDerivativeModel& model, const CollocationSet& set,
                            const RobotSpec& robot, const ActuationDomain& domain,
                            const LossContext& ctx) {
  if (set.size() == 0) throw std::invalid_argument("loss_ode: empty collocation set");
  LossValue v;
  for (std::size_t k = 0; k < set.size(); ++k) {
    const SegmentLayout layout = segment_layout(robot, set.act[k], domain);
    const auto [x, dx] = model(set.s[k], set.act[k]);
    v.value += ode_point_loss(x, dx, layout.props_at(set.s[k]), ctx, nullptr, nullptr, &v.groups);
  }
  const double inv_n = 1.0 / static_cast<double>(set.size());
  v.value *= inv_n;
  for (double& g : v.groups) g *= inv_n;
  v.network_evaluations = static_cast<long>(set.size());
  return v;
}

LossValue loss_bc_of_model(const StateModel& model, const BoundarySet& set, const RobotSpec& robot,
                           const ActuationDomain& domain, const LossContext& ctx) {
  if (set.size() == 0) throw std::invalid_argument("loss_bc: empty boundary set");
  LossValue v;
  const auto& sc = ctx.scales.state;
  for (const Actuation& act : set.act) {
    const SegmentLayout layout = segment_layout(robot, act, domain);
    const StateVector x0 = model(0.0, act);
    const StateVector x3 = model(layout.distal[2], act);
    const StateVector x2 = model(layout.distal[1], act);
    const StateVector x1 = model(layout.distal[0], act);
    add_bc_terms(bc_entries(act, x0, x3, x2, x1, sc), ctx, v);
    v.network_evaluations += 4;
  }
  const double inv_n = 1.0 / static_cast<double>(set.size());
  v.value *= inv_n;
  for (double& g : v.groups) g *= inv_n;
  return v;
}

PinnObjective::PinnObjective(Network prototype, PreparedCollocation colloc,
                             PreparedBoundary boundary, PreparedObservations obs, LossContext ctx)
    : net_(std::move(prototype)),
      colloc_(std::move(colloc)),
      boundary_(std::move(boundary)),
      obs_(std::move(obs)),
      ctx_(ctx) {
  ctx_.weights.validate();
}

LossBreakdown PinnObjective::evaluate(const Network& net, Eigen::VectorXd* grad) const {
  LossBreakdown out;
  if (colloc_.size() > 0) out.ode = loss_ode(net, colloc_, ctx_, grad);
  if (boundary_.size() > 0) out.bc = loss_bc(net, boundary_, ctx_, grad);
  out.obs = loss_obs(net, obs_, ctx_, grad);
  return out;
}

double PinnObjective::operator()(const Eigen::VectorXd& params, Eigen::VectorXd& grad) {
  net_.params() = params;
  grad.setZero(params.size());
  last_ = evaluate(net_, &grad);
  return last_.total();
}

}  // namespace ctr
