#include "ctr/lbfgs.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace ctr {

Eigen::MatrixXd xavier_uniform(int fan_in, int fan_out, std::mt19937_64& rng) {
  if (fan_in <= 0 || fan_out <= 0) throw std::invalid_argument("xavier_uniform: empty shape");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Eigen::MatrixXd w(fan_out, fan_in);
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
  return w;
}

void LbfgsConfig::validate() const {
  if (!(c1 > 0.0 && c1 < c2 && c2 < 1.0))
    throw std::invalid_argument("L-BFGS: need 0 < c1 < c2 < 1");
  if (history_size < 1) throw std::invalid_argument("L-BFGS: history_size must be >= 1");
  if (!(initial_step > 0.0)) throw std::invalid_argument("L-BFGS: initial_step must be > 0");
  if (max_line_search < 1) throw std::invalid_argument("L-BFGS: max_line_search must be >= 1");
}

const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::none: return "none";
    case StopReason::gradient_tolerance: return "gradient_tolerance";
    case StopReason::loss_change: return "loss_change";
    case StopReason::step_tolerance: return "step_tolerance";
    case StopReason::max_iterations: return "max_iterations";
    case StopReason::line_search_failed: return "line_search_failed";
    case StopReason::non_finite: return "non_finite";
  }
  return "unknown";
}

double cubic_interpolate(double x1, double f1, double g1, double x2, double f2, double g2,
                         double lo, double hi) {
  const double d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
  const double disc = d1 * d1 - g1 * g2;
  if (disc >= 0.0) {
    const double d2 = std::sqrt(disc);
    double m = (x1 <= x2) ? x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
                          : x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2));
    if (std::isfinite(m)) return std::clamp(m, lo, hi);
  }
  return 0.5 * (lo + hi);
}

LineSearchResult strong_wolfe_search(const Objective& fn, const Eigen::VectorXd& x, double t,
                                     const Eigen::VectorXd& d, double f0,
                                     const Eigen::VectorXd& g0, const LbfgsConfig& cfg) {
  constexpr double tol_change = 1e-9;
  const double gtd0 = g0.dot(d);
  const double d_norm = d.lpNorm<Eigen::Infinity>();

  LineSearchResult res;
  Eigen::VectorXd g_new(x.size());
  auto eval = [&](double step) {
    ++res.evaluations;
    return fn(x + step * d, g_new);
  };
  double f_new = eval(t);
  double gtd_new = g_new.dot(d);

  double t_prev = 0.0, f_prev = f0, gtd_prev = gtd0;
  Eigen::VectorXd g_prev = g0;

  std::array<double, 2> br{}, br_f{}, br_gtd{};
  std::array<Eigen::VectorXd, 2> br_g;
  int n_br = 0;
  bool done = false;
  int ls_iter = 0;

  while (ls_iter < cfg.max_line_search) {
    if (!std::isfinite(f_new) || f_new > f0 + cfg.c1 * t * gtd0 ||
        (ls_iter > 1 && f_new >= f_prev)) {
      br = {t_prev, t};
      br_f = {f_prev, f_new};
      br_g = {g_prev, g_new};
      br_gtd = {gtd_prev, gtd_new};
      n_br = 2;
      break;
    }
    if (std::abs(gtd_new) <= -cfg.c2 * gtd0) {
      br[0] = t;
      br_f[0] = f_new;
      br_g[0] = g_new;
      br_gtd[0] = gtd_new;
      n_br = 1;
      done = true;
      break;
    }
    if (gtd_new >= 0.0) {
      br = {t_prev, t};
      br_f = {f_prev, f_new};
      br_g = {g_prev, g_new};
      br_gtd = {gtd_prev, gtd_new};
      n_br = 2;
      break;
    }
    // Extrapolate.
    const double min_step = t + 0.01 * (t - t_prev);
    const double max_step = t * 10.0;
    const double tmp = t;
    t = cubic_interpolate(t_prev, f_prev, gtd_prev, t, f_new, gtd_new, min_step, max_step);
    t_prev = tmp;
    f_prev = f_new;
    g_prev = g_new;
    gtd_prev = gtd_new;
    f_new = eval(t);
    gtd_new = g_new.dot(d);
    ++ls_iter;
  }
  if (ls_iter == cfg.max_line_search) {
    br = {0.0, t};
    br_f = {f0, f_new};
    br_g = {g0, g_new};
    br_gtd = {gtd0, gtd_new};
    n_br = 2;
  }

  // Zoom between bracket ends until a strong-Wolfe point is found.
  bool insuf_progress = false;
  int low = 0, high = 1;
  if (n_br == 2 && br_f[0] > br_f[1]) std::swap(low, high);
  while (!done && n_br == 2 && ls_iter < cfg.max_line_search) {
    if (std::abs(br[1] - br[0]) * d_norm < tol_change) break;

    const double bmin = std::min(br[0], br[1]);
    const double bmax = std::max(br[0], br[1]);
    t = cubic_interpolate(br[0], br_f[0], br_gtd[0], br[1], br_f[1], br_gtd[1], bmin, bmax);

    const double eps = 0.1 * (bmax - bmin);
    if (std::min(bmax - t, t - bmin) < eps) {
      if (insuf_progress || t >= bmax || t <= bmin) {
        t = (std::abs(t - bmax) < std::abs(t - bmin)) ? bmax - eps : bmin + eps;
        insuf_progress = false;
      } else {
        insuf_progress = true;
      }
    } else {
      insuf_progress = false;
    }

    f_new = eval(t);
    gtd_new = g_new.dot(d);
    ++ls_iter;

    if (!std::isfinite(f_new) || f_new > f0 + cfg.c1 * t * gtd0 || f_new >= br_f[low]) {
      br[high] = t;
      br_f[high] = f_new;
      br_g[high] = g_new;
      br_gtd[high] = gtd_new;
      if (br_f[0] <= br_f[1]) {
        low = 0;
        high = 1;
      } else {
        low = 1;
        high = 0;
      }
    } else {
      if (std::abs(gtd_new) <= -cfg.c2 * gtd0) {
        done = true;
      } else if (gtd_new * (br[high] - br[low]) >= 0.0) {
        br[high] = br[low];
        br_f[high] = br_f[low];
        br_g[high] = br_g[low];
        br_gtd[high] = br_gtd[low];
      }
      br[low] = t;
      br_f[low] = f_new;
      br_g[low] = g_new;
      br_gtd[low] = gtd_new;
    }
  }

  const int pick = (n_br == 1) ? 0 : low;
  res.step = br[pick];
  res.f = br_f[pick];
  res.g = br_g[pick];
  res.wolfe = done;
  return res;
}

Eigen::VectorXd two_loop_direction(const Eigen::VectorXd& g, const std::deque<Eigen::VectorXd>& s,
                                   const std::deque<Eigen::VectorXd>& y) {
  const std::size_t k = s.size();
  Eigen::VectorXd q = g;
  std::vector<double> alpha(k), rho(k);
  for (std::size_t i = 0; i < k; ++i) rho[i] = 1.0 / y[i].dot(s[i]);
  for (std::size_t i = k; i-- > 0;) {
    alpha[i] = rho[i] * s[i].dot(q);
    q -= alpha[i] * y[i];
  }
  if (k > 0) q *= s[k - 1].dot(y[k - 1]) / y[k - 1].squaredNorm();
  for (std::size_t i = 0; i < k; ++i) {
    const double b = rho[i] * y[i].dot(q);
    q += (alpha[i] - b) * s[i];
  }
  return -q;
}

Lbfgs::Lbfgs(LbfgsConfig cfg) : cfg_(cfg) { cfg_.validate(); }

LbfgsState Lbfgs::start(const Objective& f, const Eigen::VectorXd& x0) const {
  LbfgsState st;
  st.x = x0;
  st.g.resize(x0.size());
  st.f = f(st.x, st.g);
  st.evaluations = 1;
  if (!std::isfinite(st.f) || !st.g.allFinite()) st.stop = StopReason::non_finite;
  else if (st.g.lpNorm<Eigen::Infinity>() <= cfg_.tolerance) st.stop = StopReason::gradient_tolerance;
  return st;
}

bool Lbfgs::iterate(const Objective& f, LbfgsState& st, IterationRecord& rec) const {
  if (st.stop != StopReason::none) return false;
  if (st.iteration >= cfg_.max_iterations) {
    st.stop = StopReason::max_iterations;
    return false;
  }

  Eigen::VectorXd d = two_loop_direction(st.g, st.s_hist, st.y_hist);
  double gtd = st.g.dot(d);
  if (!(gtd < 0.0)) {
    // History lost descent; restart from steepest descent.
    st.s_hist.clear();
    st.y_hist.clear();
    d = -st.g;
    gtd = st.g.dot(d);
  }
  double t = cfg_.initial_step;
  if (st.s_hist.empty()) t *= std::min(1.0, 1.0 / st.g.lpNorm<1>());

  LineSearchResult ls = strong_wolfe_search(f, st.x, t, d, st.f, st.g, cfg_);
  rec = {};
  rec.evaluations = ls.evaluations;
  rec.wolfe = ls.wolfe;

  const bool sufficient = ls.step > 0.0 && std::isfinite(ls.f) && ls.f < st.f;
  if (!sufficient) {
    // Steepest descent with step halving.
    d = -st.g;
    gtd = st.g.dot(d);
    double step = cfg_.initial_step * std::min(1.0, 1.0 / st.g.lpNorm<1>());
    Eigen::VectorXd g_try(st.x.size());
    bool ok = false;
    for (int h = 0; h < 60; ++h, step *= 0.5) {
      const double f_try = f(st.x + step * d, g_try);
      ++rec.evaluations;
      if (std::isfinite(f_try) && f_try <= st.f + cfg_.c1 * step * gtd && f_try < st.f) {
        ls.step = step;
        ls.f = f_try;
        ls.g = g_try;
        ok = true;
        break;
      }
    }
    st.evaluations += rec.evaluations;
    if (!ok) {
      st.stop = StopReason::line_search_failed;
      return false;
    }
    rec.fallback = true;
    rec.wolfe = false;
  } else {
    st.evaluations += rec.evaluations;
  }

  Eigen::VectorXd s = ls.step * d;
  Eigen::VectorXd y = ls.g - st.g;
  if (s.dot(y) > cfg_.curvature_eps) {
    if (static_cast<int>(st.s_hist.size()) == cfg_.history_size) {
      st.s_hist.pop_front();
      st.y_hist.pop_front();
    }
    st.s_hist.push_back(std::move(s));
    st.y_hist.push_back(std::move(y));
  }

  const double f_old = st.f;
  st.x += ls.step * d;
  st.f = ls.f;
  st.g = ls.g;
  ++st.iteration;

  rec.iteration = st.iteration;
  rec.loss = st.f;
  rec.grad_norm = st.g.norm();
  rec.step = ls.step;

  if (!std::isfinite(st.f) || !st.g.allFinite()) st.stop = StopReason::non_finite;
  else if (st.g.lpNorm<Eigen::Infinity>() <= cfg_.tolerance) st.stop = StopReason::gradient_tolerance;
  else if (std::abs(f_old - st.f) < cfg_.tolerance) st.stop = StopReason::loss_change;
  else if ((ls.step * d).lpNorm<Eigen::Infinity>() <= cfg_.tolerance) st.stop = StopReason::step_tolerance;
  else if (st.iteration >= cfg_.max_iterations) st.stop = StopReason::max_iterations;
  return true;
}

Lbfgs::Result Lbfgs::minimize(const Objective& f, const Eigen::VectorXd& x0) const {
  Result out;
  out.state = start(f, x0);
  IterationRecord rec;
  while (iterate(f, out.state, rec)) out.history.push_back(rec);
  return out;
}

}  // namespace ctr
