#pragma once

#include <deque>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace ctr {

/// Uniform on +-sqrt(6 / (fan_in + fan_out)); returns a fan_out x fan_in matrix.
Eigen::MatrixXd xavier_uniform(int fan_in, int fan_out, std::mt19937_64& rng);

struct LbfgsConfig {
  int history_size = 20;
  /// Trial step of the line search along the quasi-Newton direction.
  double initial_step = 2.0;
  /// Gradient (max-norm) and loss-change tolerance.
  double tolerance = 1e-10;
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_line_search = 25;
  int max_iterations = 1000;
  /// Curvature pairs with s'y at or below this are skipped.
  double curvature_eps = 1e-10;

  void validate() const;
};

/// Objective: returns f(x) and writes the gradient into `grad` (pre-sized).
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct LineSearchResult {
  double step = 0.0;
  double f = 0.0;
  Eigen::VectorXd g;
  int evaluations = 0;
  /// Both strong-Wolfe inequalities hold at `step`.
  bool wolfe = false;
};

/// Strong-Wolfe line search (bracketing + cubic-interpolation zoom).
/// When no Wolfe point is found the lowest bracketed point is returned with
/// wolfe = false.
LineSearchResult strong_wolfe_search(const Objective& f, const Eigen::VectorXd& x, double t,
                                     const Eigen::VectorXd& d, double f0,
                                     const Eigen::VectorXd& g0, const LbfgsConfig& cfg);

/// Minimizer of the cubic interpolating (x1, f1, g1), (x2, f2, g2), clamped to bounds.
double cubic_interpolate(double x1, double f1, double g1, double x2, double f2, double g2,
                         double lo, double hi);

/// Two-loop recursion: returns -H g for the limited-memory inverse Hessian
/// built from the stored pairs (oldest first). Without pairs, returns -g.
Eigen::VectorXd two_loop_direction(const Eigen::VectorXd& g, const std::deque<Eigen::VectorXd>& s,
                                   const std::deque<Eigen::VectorXd>& y);

enum class StopReason {
  none,
  gradient_tolerance,
  loss_change,
  step_tolerance,
  max_iterations,
  line_search_failed,
  non_finite,
};
const char* to_string(StopReason r);

struct IterationRecord {
  int iteration = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double step = 0.0;
  int evaluations = 0;  // objective calls in this iteration
  bool wolfe = true;
  bool fallback = false;  // steepest-descent fallback was used
};

/// Complete optimizer state; restoring it reproduces later iterations exactly.
struct LbfgsState {
  Eigen::VectorXd x;
  Eigen::VectorXd g;
  double f = 0.0;
  std::deque<Eigen::VectorXd> s_hist;
  std::deque<Eigen::VectorXd> y_hist;
  int iteration = 0;
  long evaluations = 0;
  StopReason stop = StopReason::none;
};

class Lbfgs {
 public:
  explicit Lbfgs(LbfgsConfig cfg);

  [[nodiscard]] const LbfgsConfig& config() const { return cfg_; }

  /// Evaluates the objective at x0 and returns the starting state.
  [[nodiscard]] LbfgsState start(const Objective& f, const Eigen::VectorXd& x0) const;

  /// One quasi-Newton iteration. Returns false (with state.stop set) when a
  /// stopping criterion fires.
  bool iterate(const Objective& f, LbfgsState& state, IterationRecord& rec) const;

  struct Result {
    LbfgsState state;
    std::vector<IterationRecord> history;
  };
  /// Runs until a stopping criterion or cfg.max_iterations.
  [[nodiscard]] Result minimize(const Objective& f, const Eigen::VectorXd& x0) const;

 private:
  LbfgsConfig cfg_;
};

}  // namespace ctr
