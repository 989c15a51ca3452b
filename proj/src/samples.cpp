#include "mp/samples.hpp"

#include <algorithm>
#include <cmath>

namespace mp::samples {

namespace {

int vid(std::vector<Vector2d>& vs, const Vector2d& p) {
  vs.push_back(p);
  return static_cast<int>(vs.size()) - 1;
}

BoundaryCorrespondence straight_sides(const Quadrangulation& q,
                                      const std::function<Vector2d(const Vector2d&)>& f) {
  BoundaryCorrespondence F;
  for (std::size_t k = 0; k < q.sides.size(); ++k) {
    Curve c;
    c.kv = make_open_knot_vector(1, {});
    c.points = {f(q.side_start(k)), f(q.side_end(k))};
    F.sides.push_back(std::move(c));
  }
  return F;
}

}  // namespace

Quadrangulation square_1patch() {
  RawTopology raw;
  raw.vertices = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  raw.patches = {{0, 1, 2, 3}};
  raw.sides = {{0, 1}, {1, 2}, {2, 3}, {3, 0}};
  return build_topology(raw);
}

Quadrangulation square_2patch() {
  RawTopology raw;
  raw.vertices = {{0, 0}, {0.5, 0}, {1, 0}, {1, 1}, {0.5, 1}, {0, 1}};
  raw.patches = {{0, 1, 4, 5}, {1, 2, 3, 4}};
  raw.sides = {{0, 1, 2}, {2, 3}, {3, 4, 5}, {5, 0}};
  return build_topology(raw);
}

Quadrangulation square_4patch(const Vector2d& c) {
  RawTopology raw;
  auto& v = raw.vertices;
  // Boundary sides split at their midpoints; only the interior vertex is
  // displaced, so the patches are genuinely skewed quadrilaterals.
  const int b0 = vid(v, {0, 0}), b1 = vid(v, {0.5, 0}), b2 = vid(v, {1, 0});
  const int r1 = vid(v, {1, 0.5});
  const int t2 = vid(v, {1, 1}), t1 = vid(v, {0.5, 1}), t0 = vid(v, {0, 1});
  const int l1 = vid(v, {0, 0.5});
  const int m = vid(v, c);
  raw.patches = {{b0, b1, m, l1}, {b1, b2, r1, m}, {m, r1, t2, t1}, {l1, m, t1, t0}};
  raw.sides = {{b0, b1, b2}, {b2, r1, t2}, {t2, t1, t0}, {t0, l1, b0}};
  return build_topology(raw);
}

Quadrangulation rect_6patch_irregular() {
  RawTopology raw;
  auto& v = raw.vertices;
  // Bottom row, right column, top row (reversed), left column, interior.
  const int a0 = vid(v, {0, 0}), a1 = vid(v, {0.8, 0}), a2 = vid(v, {2.3, 0}),
            a3 = vid(v, {3, 0});
  const int r1 = vid(v, {3, 1.3});
  const int c3 = vid(v, {3, 2}), c2 = vid(v, {2.1, 2}), c1 = vid(v, {1.4, 2}),
            c0 = vid(v, {0, 2});
  const int l1 = vid(v, {0, 0.7});
  const int m1 = vid(v, {1.25, 0.85}), m2 = vid(v, {1.8, 1.2});
  raw.patches = {{a0, a1, m1, l1}, {a1, a2, m2, m1}, {a2, a3, r1, m2},
                 {l1, m1, c1, c0}, {m1, m2, c2, c1}, {m2, r1, c3, c2}};
  raw.sides = {{a0, a1, a2, a3}, {a3, r1, c3}, {c3, c2, c1, c0}, {c0, l1, a0}};
  return build_topology(raw);
}

Quadrangulation square_5patch_frame(double inset) {
  require(inset > 0 && inset < 0.5, ErrorKind::Input, "frame inset must be in (0, 0.5)");
  RawTopology raw;
  auto& v = raw.vertices;
  const double a = inset, b = 1.0 - inset;
  const int s0 = vid(v, {0, 0}), s1 = vid(v, {1, 0}), s2 = vid(v, {1, 1}),
            s3 = vid(v, {0, 1});
  const int i0 = vid(v, {a, a}), i1 = vid(v, {b, a}), i2 = vid(v, {b, b}),
            i3 = vid(v, {a, b});
  // Boundary patches oriented with the outer side as the local edge e2
  // (mu2 = 1), so mu1 is tangential and mu2 transverse to the boundary.
  raw.patches = {{i1, i0, s0, s1},   // bottom
                 {i2, i1, s1, s2},   // right
                 {i3, i2, s2, s3},   // top
                 {i0, i3, s3, s0},   // left
                 {i0, i1, i2, i3}};  // interior
  raw.sides = {{s0, s1}, {s1, s2}, {s2, s3}, {s3, s0}};
  return build_topology(raw);
}

Quadrangulation diamond_5patch_frame(double scale) {
  require(scale > 0 && scale < 1, ErrorKind::Input, "frame scale must be in (0, 1)");
  RawTopology raw;
  auto& v = raw.vertices;
  // Outer diamond through the mid-edge points of the unit square; inner
  // diamond scaled toward the centre. Boundary patches oriented with the
  // outer side as the local edge e2, as in square_5patch_frame.
  const Vector2d C(0.5, 0.5);
  const Vector2d V[4] = {{0.5, 0}, {1, 0.5}, {0.5, 1}, {0, 0.5}};
  int s[4], i[4];
  for (int k = 0; k < 4; ++k) s[k] = vid(v, V[k]);
  for (int k = 0; k < 4; ++k) i[k] = vid(v, C + scale * (V[k] - C));
  raw.patches = {{i[1], i[0], s[0], s[1]},
                 {i[2], i[1], s[1], s[2]},
                 {i[3], i[2], s[2], s[3]},
                 {i[0], i[3], s[3], s[0]},
                 {i[0], i[1], i[2], i[3]}};
  raw.sides = {{s[0], s[1]}, {s[1], s[2]}, {s[2], s[3]}, {s[3], s[0]}};
  return build_topology(raw);
}

BoundaryCorrespondence corner_wrapped_sheared_boundary(const Quadrangulation& q,
                                                       double shear) {
  const auto phi = [&](const Vector2d& p) {
    const double h = p[1] * p[1] * (3.0 - 2.0 * p[1]);
    return Vector2d(p[0] + shear * h, p[1]);
  };
  // Each parametric side runs between two mid-edge points of the unit square;
  // its image wraps the square corner between them, placed at curve parameter
  // 1/2 with a triple knot so the right-angle kink is exact.
  BoundaryCorrespondence F;
  for (std::size_t k = 0; k < q.sides.size(); ++k) {
    const Vector2d a = q.side_start(k), b = q.side_end(k);
    // The wrapped corner of the unit square: each endpoint has exactly one
    // coordinate equal to 1/2; the corner takes the other coordinate of each.
    const Vector2d corner(a[0] == 0.5 ? b[0] : a[0], a[1] == 0.5 ? b[1] : a[1]);
    KnotVector kv;
    kv.degree = 3;
    kv.knots = {0, 0, 0, 0, 0.5, 0.5, 0.5, 1, 1, 1, 1};
    F.sides.push_back(interpolate_curve(kv, [&](double t) {
      const Vector2d p = t <= 0.5 ? Vector2d(a + 2 * t * (corner - a))
                                  : Vector2d(corner + (2 * t - 1) * (b - corner));
      return phi(p);
    }));
  }
  return F;
}

Quadrangulation hexagon_3patch() {
  RawTopology raw;
  auto& v = raw.vertices;
  const int o = vid(v, {0, 0});
  std::array<int, 6> p{};
  for (int k = 0; k < 6; ++k) {
    const double a = M_PI / 3.0 * k;
    p[k] = vid(v, {std::cos(a), std::sin(a)});
  }
  raw.patches = {{o, p[0], p[1], p[2]}, {o, p[2], p[3], p[4]}, {o, p[4], p[5], p[0]}};
  raw.sides = {{p[0], p[1]}, {p[1], p[2]}, {p[2], p[3]},
               {p[3], p[4]}, {p[4], p[5]}, {p[5], p[0]}};
  return build_topology(raw);
}

BoundaryCorrespondence affine_boundary(const Quadrangulation& q, const Matrix2d& A,
                                       const Vector2d& b) {
  return straight_sides(q, [&](const Vector2d& p) { return Vector2d(A * p + b); });
}

BoundaryCorrespondence sheared_boundary(const Quadrangulation& q, double shear) {
  Matrix2d A;
  A << 1.0, shear, 0.0, 1.0;
  return affine_boundary(q, A);
}

BoundaryCorrespondence smooth_sheared_boundary(const Quadrangulation& q, double shear) {
  // Cubic shear profile with vanishing slope at xi2 = 0 and 1, so the domain
  // corners stay right angles while the interior leans by up to 1.5*shear.
  const auto phi = [&](const Vector2d& p) {
    const double h = p[1] * p[1] * (3.0 - 2.0 * p[1]);
    return Vector2d(p[0] + shear * h, p[1]);
  };
  BoundaryCorrespondence F;
  for (std::size_t k = 0; k < q.sides.size(); ++k) {
    const Vector2d a = q.side_start(k), b = q.side_end(k);
    F.sides.push_back(
        interpolate_curve(3, {}, [&](double t) { return phi(a + t * (b - a)); }));
  }
  return F;
}

Vector2d conformal_point(const Vector2d& xi) {
  // w(z) = z + 0.1 z^2 with z = xi1 + i xi2.
  return {xi[0] + 0.1 * (xi[0] * xi[0] - xi[1] * xi[1]), xi[1] + 0.2 * xi[0] * xi[1]};
}

Matrix2d conformal_jacobian(const Vector2d& xi) {
  Matrix2d J;
  J << 1.0 + 0.2 * xi[0], -0.2 * xi[1], 0.2 * xi[1], 1.0 + 0.2 * xi[0];
  return J;
}

Curve interpolate_curve(int degree, const std::vector<double>& interior_breaks,
                        const std::function<Vector2d(double)>& f) {
  return interpolate_curve(make_open_knot_vector(degree, interior_breaks), f);
}

Curve interpolate_curve(const KnotVector& kv, const std::function<Vector2d(double)>& f) {
  Curve c;
  c.kv = kv;
  const auto grev = c.kv.greville();
  const int n = c.kv.num_basis();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixX2d rhs(n, 2);
  std::vector<double> vals;
  for (int r = 0; r < n; ++r) {
    const int first = eval_basis(c.kv, grev[r], 0, vals);
    for (std::size_t j = 0; j < vals.size(); ++j) A(r, first + j) = vals[j];
    rhs.row(r) = f(grev[r]).transpose();
  }
  const Eigen::MatrixX2d pts = A.partialPivLu().solve(rhs);
  c.points.resize(n);
  for (int i = 0; i < n; ++i) c.points[i] = pts.row(i).transpose();
  return c;
}

BoundaryCorrespondence conformal_boundary(const MultipatchSpace& space, double beta) {
  const Quadrangulation& q = *space.topo;
  const auto sigma = [beta](double t) {
    return beta == 0.0 ? t : std::expm1(beta * t) / std::expm1(beta);
  };
  BoundaryCorrespondence F;
  for (std::size_t k = 0; k < q.sides.size(); ++k) {
    const Vector2d s0 = q.side_start(k), dir = q.side_end(k) - q.side_start(k);
    int degree = 1;
    std::vector<double> breaks;
    for (const auto& be : q.sides[k]) {
      const KnotVector& kv = space.edge_kv(be.patch, be.edge);
      degree = std::max(degree, kv.degree);
      for (double u : kv.breakpoints()) breaks.push_back(be.t0 + u * (be.t1 - be.t0));
    }
    std::sort(breaks.begin(), breaks.end());
    std::vector<double> interior;
    for (double t : breaks)
      if (t > kKnotTol && t < 1.0 - kKnotTol &&
          (interior.empty() || t - interior.back() > kKnotTol))
        interior.push_back(t);
    F.sides.push_back(interpolate_curve(degree, interior, [&](double t) {
      return conformal_point(s0 + sigma(t) * dir);
    }));
  }
  return F;
}

BoundaryCorrespondence chevron_boundary(const Quadrangulation& q, double dent) {
  require(dent > 0 && dent < 1, ErrorKind::Input, "chevron dent must be in (0, 1)");
  BoundaryCorrespondence F = straight_sides(q, [](const Vector2d& p) { return p; });
  // The top side runs from (1,1) to (0,1); bend its midpoint down to create a
  // concave corner at (0.5, dent).
  for (std::size_t k = 0; k < q.sides.size(); ++k) {
    if ((q.side_start(k) - Vector2d(1, 1)).norm() < 1e-12 &&
        (q.side_end(k) - Vector2d(0, 1)).norm() < 1e-12) {
      Curve c;
      c.kv = make_open_knot_vector(1, {0.5});
      c.points = {{1, 1}, {0.5, dent}, {0, 1}};
      F.sides[k] = std::move(c);
      return F;
    }
  }
  fail(ErrorKind::Input, "chevron_boundary expects a covering with a (1,1)->(0,1) top side");
}

BoundaryCorrespondence skew_quad_boundary(const Quadrangulation& q) {
  // Bilinear image of the unit square onto a convex, strongly skewed quad.
  const Vector2d c0(0, 0), c1(2, 0), c2(2.6, 1.7), c3(0.4, 1.3);
  return straight_sides(q, [&](const Vector2d& p) {
    const double u = p[0], v = p[1];
    return Vector2d((1 - u) * (1 - v) * c0 + u * (1 - v) * c1 + u * v * c2 +
                    (1 - u) * v * c3);
  });
}

}  // namespace mp::samples
