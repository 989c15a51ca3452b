// Forward-mode dual numbers over a fixed number of directions, plus tiny 2x2
// matrix/vector helpers usable with both double and Dual entries. Used to
// differentiate operator integrands with respect to the quadrature-point state
// (values/derivatives of the unknown fields), giving exact Newton Jacobians.
#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>

namespace mp {

template <int N>
struct Dual {
  double v = 0.0;
  std::array<double, N> d{};

  Dual() = default;
  Dual(double value) : v(value) { d.fill(0.0); }  // NOLINT: implicit by design
  static Dual seed(double value, int dir) {
    Dual r(value);
    r.d[dir] = 1.0;
    return r;
  }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    for (int i = 0; i < N; ++i) d[i] += o.d[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    for (int i = 0; i < N; ++i) d[i] -= o.d[i];
    return *this;
  }
  Dual& operator*=(const Dual& o) { return *this = *this * o; }
  Dual& operator/=(const Dual& o) { return *this = *this / o; }

  friend Dual operator+(Dual a, const Dual& b) { return a += b; }
  friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
  friend Dual operator-(const Dual& a) {
    Dual r;
    r.v = -a.v;
    for (int i = 0; i < N; ++i) r.d[i] = -a.d[i];
    return r;
  }
  friend Dual operator*(const Dual& a, const Dual& b) {
    Dual r;
    r.v = a.v * b.v;
    for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
    return r;
  }
  friend Dual operator*(double a, Dual b) {
    b.v *= a;
    for (int i = 0; i < N; ++i) b.d[i] *= a;
    return b;
  }
  friend Dual operator*(const Dual& a, double b) { return b * a; }
  friend Dual operator/(const Dual& a, const Dual& b) {
    Dual r;
    const double inv = 1.0 / b.v;
    r.v = a.v * inv;
    for (int i = 0; i < N; ++i) r.d[i] = (a.d[i] - r.v * b.d[i]) * inv;
    return r;
  }
  friend Dual operator/(const Dual& a, double b) { return a * (1.0 / b); }
  friend bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
  friend bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
};

template <int N>
Dual<N> sqrt(const Dual<N>& a) {
  Dual<N> r;
  r.v = std::sqrt(a.v);
  const double f = 0.5 / r.v;
  for (int i = 0; i < N; ++i) r.d[i] = f * a.d[i];
  return r;
}
template <int N>
Dual<N> exp(const Dual<N>& a) {
  Dual<N> r;
  r.v = std::exp(a.v);
  for (int i = 0; i < N; ++i) r.d[i] = r.v * a.d[i];
  return r;
}
template <int N>
Dual<N> log(const Dual<N>& a) {
  Dual<N> r;
  r.v = std::log(a.v);
  const double f = 1.0 / a.v;
  for (int i = 0; i < N; ++i) r.d[i] = f * a.d[i];
  return r;
}
// x^k for positive x (real exponent).
template <int N>
Dual<N> pow(const Dual<N>& a, double k) {
  Dual<N> r;
  r.v = std::pow(a.v, k);
  const double f = k * std::pow(a.v, k - 1.0);
  for (int i = 0; i < N; ++i) r.d[i] = f * a.d[i];
  return r;
}
inline double value_of(double x) { return x; }
template <int N>
double value_of(const Dual<N>& x) {
  return x.v;
}

// --- tiny fixed-size linear algebra over a generic scalar -------------------

template <class T>
struct Vec2T {
  T x{}, y{};
  T dot(const Vec2T& o) const { return x * o.x + y * o.y; }
  T squaredNorm() const { return x * x + y * y; }
  friend Vec2T operator+(const Vec2T& a, const Vec2T& b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2T operator-(const Vec2T& a, const Vec2T& b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2T operator*(const T& s, const Vec2T& a) { return {s * a.x, s * a.y}; }
};

template <class T>
struct Mat2T {
  // Row-major entries m[r][c].
  std::array<std::array<T, 2>, 2> m{};
  T& operator()(int r, int c) { return m[r][c]; }
  const T& operator()(int r, int c) const { return m[r][c]; }

  static Mat2T identity() {
    Mat2T r;
    r(0, 0) = T(1.0);
    r(1, 1) = T(1.0);
    return r;
  }
  static Mat2T from(const Eigen::Matrix2d& a) {
    Mat2T r;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) r(i, j) = T(a(i, j));
    return r;
  }
  Mat2T transpose() const {
    Mat2T r;
    r(0, 0) = m[0][0];
    r(0, 1) = m[1][0];
    r(1, 0) = m[0][1];
    r(1, 1) = m[1][1];
    return r;
  }
  T det() const { return m[0][0] * m[1][1] - m[0][1] * m[1][0]; }
  T trace() const { return m[0][0] + m[1][1]; }
  T squaredNorm() const {
    return m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] + m[1][1] * m[1][1];
  }
  friend Mat2T operator+(const Mat2T& a, const Mat2T& b) {
    Mat2T r;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) r(i, j) = a(i, j) + b(i, j);
    return r;
  }
  friend Mat2T operator-(const Mat2T& a, const Mat2T& b) {
    Mat2T r;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) r(i, j) = a(i, j) - b(i, j);
    return r;
  }
  friend Mat2T operator*(const Mat2T& a, const Mat2T& b) {
    Mat2T r;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) r(i, j) = a(i, 0) * b(0, j) + a(i, 1) * b(1, j);
    return r;
  }
  friend Mat2T operator*(const T& s, const Mat2T& a) {
    Mat2T r;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) r(i, j) = s * a(i, j);
    return r;
  }
  friend Vec2T<T> operator*(const Mat2T& a, const Vec2T<T>& v) {
    return {a(0, 0) * v.x + a(0, 1) * v.y, a(1, 0) * v.x + a(1, 1) * v.y};
  }
};

template <class T>
T frobenius(const Mat2T<T>& a, const Mat2T<T>& b) {
  return a(0, 0) * b(0, 0) + a(0, 1) * b(0, 1) + a(1, 0) * b(1, 0) + a(1, 1) * b(1, 1);
}

}  // namespace mp
