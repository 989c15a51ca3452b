// Univariate B-spline basis: evaluation, knot utilities, refinement and
// prolongation.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <mp/splines.hpp>

#include <cmath>
#include <random>

using namespace mp;

namespace {

double spline_value(const KnotVector& kv, const Eigen::VectorXd& c, double x, int deriv = 0) {
  std::vector<double> vals;
  const int first = eval_basis(kv, x, deriv, vals);
  double v = 0.0;
  for (std::size_t j = 0; j < vals.size(); ++j) v += vals[j] * c[first + j];
  return v;
}

}  // namespace

TEST_CASE("cubic Bezier basis values at the midpoint") {
  const KnotVector kv = make_open_knot_vector(3, {});
  std::vector<double> vals;
  const int first = eval_basis(kv, 0.5, 0, vals);
  CHECK(first == 0);
  REQUIRE(vals.size() == 4);
  CHECK(vals[0] == doctest::Approx(0.125).epsilon(1e-14));
  CHECK(vals[1] == doctest::Approx(0.375).epsilon(1e-14));
  CHECK(vals[2] == doctest::Approx(0.375).epsilon(1e-14));
  CHECK(vals[3] == doctest::Approx(0.125).epsilon(1e-14));
}

TEST_CASE("cubic Bezier first derivatives at the left endpoint") {
  const KnotVector kv = make_open_knot_vector(3, {});
  std::vector<double> vals;
  const int first = eval_basis(kv, 0.0, 1, vals);
  CHECK(first == 0);
  REQUIRE(vals.size() == 4);
  CHECK(vals[0] == doctest::Approx(-3.0).epsilon(1e-14));
  CHECK(vals[1] == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(vals[2] == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(vals[3] == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("basis dimension of open knot vectors") {
  CHECK(make_open_knot_vector(3, {}).num_basis() == 4);
  CHECK(make_open_knot_vector(3, {0.25, 0.5, 0.75}).num_basis() == 7);
}

TEST_CASE("open knot vector layout") {
  const KnotVector kv = make_open_knot_vector(2, {0.5});
  const std::vector<double> expect{0, 0, 0, 0.5, 1, 1, 1};
  REQUIRE(kv.knots.size() == expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i) CHECK(kv.knots[i] == expect[i]);
}

TEST_CASE("greville abscissae") {
  const KnotVector kv = make_open_knot_vector(2, {0.5});
  const auto g = kv.greville();
  REQUIRE(g.size() == 4);
  CHECK(g[0] == doctest::Approx(0.0));
  CHECK(g[1] == doctest::Approx(0.25));
  CHECK(g[2] == doctest::Approx(0.75));
  CHECK(g[3] == doctest::Approx(1.0));
}

TEST_CASE("dyadic refinement inserts span midpoints") {
  KnotVector kv;
  kv.degree = 1;
  kv.knots = {0, 0, 1, 1};
  const KnotVector f = refine_dyadic(kv);
  const std::vector<double> expect{0, 0, 0.5, 1, 1};
  REQUIRE(f.knots.size() == expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i) CHECK(f.knots[i] == expect[i]);
}

TEST_CASE("linear prolongation matrix is midpoint averaging") {
  const KnotVector coarse = make_open_knot_vector(1, {});
  const KnotVector fine = refine_dyadic(coarse);
  const Eigen::MatrixXd P = Eigen::MatrixXd(prolongation_matrix(coarse, fine));
  REQUIRE(P.rows() == 3);
  REQUIRE(P.cols() == 2);
  CHECK(P(0, 0) == doctest::Approx(1.0));
  CHECK(P(0, 1) == doctest::Approx(0.0));
  CHECK(P(1, 0) == doctest::Approx(0.5));
  CHECK(P(1, 1) == doctest::Approx(0.5));
  CHECK(P(2, 0) == doctest::Approx(0.0));
  CHECK(P(2, 1) == doctest::Approx(1.0));
}

TEST_CASE("prolongation reproduces the coarse spline exactly for degrees 1..5") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int p = 1; p <= 5; ++p) {
    const KnotVector coarse = make_open_knot_vector(p, {0.3, 0.7});
    const KnotVector fine = refine_dyadic(coarse);
    const Eigen::MatrixXd P = Eigen::MatrixXd(prolongation_matrix(coarse, fine));
    Eigen::VectorXd c(coarse.num_basis());
    for (int i = 0; i < c.size(); ++i) c[i] = uni(rng);
    const Eigen::VectorXd cf = P * c;
    for (int s = 0; s < 50; ++s) {
      const double x = 0.5 * (uni(rng) + 1.0);
      CHECK(spline_value(coarse, c, x) ==
            doctest::Approx(spline_value(fine, cf, x)).epsilon(1e-12));
    }
  }
}

TEST_CASE("partition of unity at random points") {
  const KnotVector kv = make_open_knot_vector(3, {0.2, 0.55, 0.8});
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<double> vals;
  for (int s = 0; s < 1000; ++s) {
    const double x = uni(rng);
    eval_basis(kv, x, 0, vals);
    double sum = 0.0;
    for (double v : vals) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("derivatives agree with central differences") {
  const KnotVector kv = make_open_knot_vector(4, {0.25, 0.5, 0.75});
  std::mt19937 rng(13);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Eigen::VectorXd c(kv.num_basis());
  for (int i = 0; i < c.size(); ++i) c[i] = uni(rng);
  const double h = 1e-6;
  for (int s = 0; s < 40; ++s) {
    const double x = 0.05 + 0.9 * 0.5 * (uni(rng) + 1.0);
    const double d1 = spline_value(kv, c, x, 1);
    const double fd = (spline_value(kv, c, x + h) - spline_value(kv, c, x - h)) / (2 * h);
    CHECK(std::abs(d1 - fd) <= 1e-6 * std::max(1.0, std::abs(d1)));
    const double d2 = spline_value(kv, c, x, 2);
    const double fd2 = (spline_value(kv, c, x + h, 1) - spline_value(kv, c, x - h, 1)) / (2 * h);
    CHECK(std::abs(d2 - fd2) <= 1e-5 * std::max(1.0, std::abs(d2)));
  }
}

TEST_CASE("find_span conventions") {
  const KnotVector kv = make_open_knot_vector(2, {0.5});
  CHECK(kv.find_span(0.0) == 2);
  CHECK(kv.find_span(0.25) == 2);
  CHECK(kv.find_span(0.5) == 3);
  // The right endpoint lands in the last nonempty span.
  CHECK(kv.find_span(1.0) == 3);
}

TEST_CASE("breakpoints and span counts") {
  const KnotVector kv = make_open_knot_vector(3, {0.25, 0.5, 0.75});
  const auto bk = kv.breakpoints();
  REQUIRE(bk.size() == 5);
  CHECK(kv.span_count() == 4);
  CHECK(bk.front() == 0.0);
  CHECK(bk.back() == 1.0);
}

TEST_CASE("reversed knot vector mirrors evaluation") {
  const KnotVector kv = make_open_knot_vector(3, {0.2, 0.7});
  const KnotVector rv = reversed(kv);
  Eigen::VectorXd c(kv.num_basis());
  for (int i = 0; i < c.size(); ++i) c[i] = std::sin(1.0 + i);
  Eigen::VectorXd cr = c.reverse();
  for (double x : {0.0, 0.13, 0.5, 0.81, 1.0})
    CHECK(spline_value(kv, c, x) == doctest::Approx(spline_value(rv, cr, 1.0 - x)).epsilon(1e-13));
}

TEST_CASE("malformed knot vectors are rejected") {
  KnotVector kv;
  kv.degree = 2;
  kv.knots = {0, 0, 0, 0.6, 0.4, 1, 1, 1};  // decreasing interior knots
  CHECK_THROWS_AS(kv.validate(), Error);
  KnotVector kv2;
  kv2.degree = 3;
  kv2.knots = {0, 0, 1, 1};  // not open for the degree
  CHECK_THROWS_AS(kv2.validate(), Error);
}
