#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace ctr {

/// Forward-mode dual number carrying N directional derivatives.
///
/// Used wherever a small Jacobian of a scalar-templated routine is needed
/// (the rod right-hand side inside the physics loss, for instance).
template <std::size_t N>
struct Dual {
  double val = 0.0;
  std::array<double, N> d{};

  constexpr Dual() = default;
  constexpr Dual(double v) : val(v) {}  // NOLINT: implicit constant promotion
  constexpr Dual(double v, const std::array<double, N>& g) : val(v), d(g) {}

  /// Independent variable number `k` of N with value v.
  static constexpr Dual variable(double v, std::size_t k) {
    Dual r(v);
    r.d[k] = 1.0;
    return r;
  }

  constexpr Dual& operator+=(const Dual& o) {
    val += o.val;
    for (std::size_t k = 0; k < N; ++k) d[k] += o.d[k];
    return *this;
  }
  constexpr Dual& operator-=(const Dual& o) {
    val -= o.val;
    for (std::size_t k = 0; k < N; ++k) d[k] -= o.d[k];
    return *this;
  }
  constexpr Dual& operator*=(const Dual& o) {
    for (std::size_t k = 0; k < N; ++k) d[k] = d[k] * o.val + val * o.d[k];
    val *= o.val;
    return *this;
  }
  constexpr Dual& operator/=(const Dual& o) {
    const double inv = 1.0 / o.val;
    for (std::size_t k = 0; k < N; ++k) d[k] = (d[k] - val * inv * o.d[k]) * inv;
    val *= inv;
    return *this;
  }
};

template <std::size_t N>
constexpr Dual<N> operator-(Dual<N> a) {
  a.val = -a.val;
  for (auto& g : a.d) g = -g;
  return a;
}

template <std::size_t N>
constexpr Dual<N> operator+(Dual<N> a, const Dual<N>& b) { return a += b; }
template <std::size_t N>
constexpr Dual<N> operator-(Dual<N> a, const Dual<N>& b) { return a -= b; }
template <std::size_t N>
constexpr Dual<N> operator*(Dual<N> a, const Dual<N>& b) { return a *= b; }
template <std::size_t N>
constexpr Dual<N> operator/(Dual<N> a, const Dual<N>& b) { return a /= b; }

template <std::size_t N>
constexpr Dual<N> operator+(Dual<N> a, double b) { a.val += b; return a; }
template <std::size_t N>
constexpr Dual<N> operator+(double a, Dual<N> b) { b.val += a; return b; }
template <std::size_t N>
constexpr Dual<N> operator-(Dual<N> a, double b) { a.val -= b; return a; }
template <std::size_t N>
constexpr Dual<N> operator-(double a, const Dual<N>& b) { return a + (-b); }

template <std::size_t N>
constexpr Dual<N> operator*(Dual<N> a, double b) {
  a.val *= b;
  for (auto& g : a.d) g *= b;
  return a;
}
template <std::size_t N>
constexpr Dual<N> operator*(double a, Dual<N> b) { return b * a; }
template <std::size_t N>
constexpr Dual<N> operator/(Dual<N> a, double b) { return a * (1.0 / b); }
template <std::size_t N>
constexpr Dual<N> operator/(double a, const Dual<N>& b) { return Dual<N>(a) / b; }

// Chain rule helper: f(a) with f'(a) = slope.
template <std::size_t N>
constexpr Dual<N> chain(const Dual<N>& a, double value, double slope) {
  Dual<N> r(value);
  for (std::size_t k = 0; k < N; ++k) r.d[k] = slope * a.d[k];
  return r;
}

template <std::size_t N>
Dual<N> sin(const Dual<N>& a) { return chain(a, std::sin(a.val), std::cos(a.val)); }
template <std::size_t N>
Dual<N> cos(const Dual<N>& a) { return chain(a, std::cos(a.val), -std::sin(a.val)); }
template <std::size_t N>
Dual<N> tanh(const Dual<N>& a) {
  const double t = std::tanh(a.val);
  return chain(a, t, 1.0 - t * t);
}
template <std::size_t N>
Dual<N> exp(const Dual<N>& a) {
  const double e = std::exp(a.val);
  return chain(a, e, e);
}
template <std::size_t N>
Dual<N> sqrt(const Dual<N>& a) {
  const double r = std::sqrt(a.val);
  return chain(a, r, 0.5 / r);
}

inline double value_of(double x) { return x; }
template <std::size_t N>
double value_of(const Dual<N>& x) { return x.val; }

}  // namespace ctr
