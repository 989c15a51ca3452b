#include "mp/splines.hpp"

#include <algorithm>
#include <cmath>

namespace mp {

void KnotVector::validate() const {
  require(degree >= 1, ErrorKind::Input, "knot vector: degree must be >= 1");
  const int n = num_basis();
  require(n >= degree + 1, ErrorKind::Input, "knot vector: too few knots");
  for (std::size_t i = 1; i < knots.size(); ++i)
    require(knots[i] >= knots[i - 1] - kKnotTol, ErrorKind::Input,
            "knot vector: knots not nondecreasing");
  for (int i = 0; i <= degree; ++i) {
    require(std::abs(knots[i] - knots.front()) <= kKnotTol, ErrorKind::Input,
            "knot vector: not open at the left end");
    require(std::abs(knots[knots.size() - 1 - i] - knots.back()) <= kKnotTol,
            ErrorKind::Input, "knot vector: not open at the right end");
  }
  // Interior multiplicity at most degree (keeps at least C0 inside a patch).
  int run = 1;
  for (int i = degree + 2; i < n; ++i) {
    if (std::abs(knots[i] - knots[i - 1]) <= kKnotTol)
      ++run;
    else
      run = 1;
    require(run <= degree, ErrorKind::Input,
            "knot vector: interior knot multiplicity exceeds degree");
  }
}

std::vector<double> KnotVector::breakpoints() const {
  std::vector<double> b;
  for (double k : knots)
    if (b.empty() || k > b.back() + kKnotTol) b.push_back(k);
  return b;
}

int KnotVector::find_span(double x) const {
  const int n = num_basis();
  if (x >= knots[n] - kKnotTol) {
    // Closed right endpoint: last nonempty span.
    int k = n - 1;
    while (k > degree && knots[k + 1] - knots[k] <= kKnotTol) --k;
    return k;
  }
  int low = degree, high = n;
  while (high - low > 1) {
    int mid = (low + high) / 2;
    if (x < knots[mid])
      high = mid;
    else
      low = mid;
  }
  return low;
}

std::vector<double> KnotVector::greville() const {
  std::vector<double> g(num_basis());
  for (int i = 0; i < num_basis(); ++i) {
    double s = 0;
    for (int j = 1; j <= degree; ++j) s += knots[i + j];
    g[i] = s / degree;
  }
  return g;
}

bool operator==(const KnotVector& a, const KnotVector& b) {
  if (a.degree != b.degree || a.knots.size() != b.knots.size()) return false;
  for (std::size_t i = 0; i < a.knots.size(); ++i)
    if (std::abs(a.knots[i] - b.knots[i]) > kKnotTol) return false;
  return true;
}

KnotVector make_open_knot_vector(int degree, const std::vector<double>& interior_breaks) {
  require(degree >= 1, ErrorKind::Input, "make_open_knot_vector: degree must be >= 1");
  for (std::size_t i = 0; i < interior_breaks.size(); ++i) {
    require(interior_breaks[i] > 0.0 && interior_breaks[i] < 1.0, ErrorKind::Input,
            "make_open_knot_vector: interior break outside (0,1)");
    if (i > 0)
      require(interior_breaks[i] > interior_breaks[i - 1], ErrorKind::Input,
              "make_open_knot_vector: interior breaks not strictly increasing");
  }
  KnotVector kv;
  kv.degree = degree;
  kv.knots.assign(degree + 1, 0.0);
  kv.knots.insert(kv.knots.end(), interior_breaks.begin(), interior_breaks.end());
  kv.knots.insert(kv.knots.end(), degree + 1, 1.0);
  return kv;
}

int eval_basis_all(const KnotVector& kv, double x, int nderiv,
                   std::array<std::array<double, 6>, 3>& out) {
  require(x >= kv.front() - kKnotTol && x <= kv.back() + kKnotTol, ErrorKind::Input,
          "eval_basis: point outside knot vector domain");
  x = std::min(std::max(x, kv.front()), kv.back());
  const int p = kv.degree;
  require(p + 1 <= 6, ErrorKind::Input, "eval_basis: degree > 5 not supported");
  const int span = kv.find_span(x);
  const auto& U = kv.knots;

  // Derivatives of the p+1 active functions (Piegl & Tiller, A2.3).
  double ndu[6][6], left[6], right[6];
  ndu[0][0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - U[span + 1 - j];
    right[j] = U[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }
  for (auto& row : out) row.fill(0.0);
  for (int j = 0; j <= p; ++j) out[0][j] = ndu[j][p];

  const int nd = std::min(nderiv, p);
  double a[2][6];
  for (int r = 0; r <= p; ++r) {
    int s1 = 0, s2 = 1;
    a[0][0] = 1.0;
    for (int k = 1; k <= nd; ++k) {
      double d = 0.0;
      const int rk = r - k, pk = p - k;
      if (r >= k) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        d = a[s2][0] * ndu[rk][pk];
      }
      const int j1 = (rk >= -1) ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        d += a[s2][j] * ndu[rk + j][pk];
      }
      if (r <= pk) {
        a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
        d += a[s2][k] * ndu[r][pk];
      }
      out[k][r] = d;
      std::swap(s1, s2);
    }
  }
  double fac = p;
  for (int k = 1; k <= nd; ++k) {
    for (int j = 0; j <= p; ++j) out[k][j] *= fac;
    fac *= (p - k);
  }
  return span - p;
}

int eval_basis(const KnotVector& kv, double x, int deriv, std::vector<double>& values) {
  require(deriv >= 0 && deriv <= 2, ErrorKind::Input, "eval_basis: deriv must be 0..2");
  std::array<std::array<double, 6>, 3> out;
  const int first = eval_basis_all(kv, x, deriv, out);
  values.assign(out[deriv].begin(), out[deriv].begin() + kv.degree + 1);
  return first;
}

KnotVector refine_dyadic(const KnotVector& kv) {
  const auto b = kv.breakpoints();
  KnotVector out;
  out.degree = kv.degree;
  std::vector<double> mids;
  for (std::size_t i = 0; i + 1 < b.size(); ++i) mids.push_back(0.5 * (b[i] + b[i + 1]));
  out.knots = kv.knots;
  out.knots.insert(out.knots.end(), mids.begin(), mids.end());
  std::sort(out.knots.begin(), out.knots.end());
  return out;
}

namespace {
// Single-knot-insertion matrix (n+1) x n for inserting u into kv (Boehm).
Eigen::SparseMatrix<double> insertion_matrix(const KnotVector& kv, double u) {
  const int n = kv.num_basis();
  const int p = kv.degree;
  const int k = kv.find_span(u);
  Eigen::SparseMatrix<double> P(n + 1, n);
  std::vector<Eigen::Triplet<double>> trip;
  for (int i = 0; i <= n; ++i) {
    if (i <= k - p) {
      trip.emplace_back(i, i, 1.0);
    } else if (i <= k) {
      const double denom = kv.knots[i + p] - kv.knots[i];
      const double a = denom > kKnotTol ? (u - kv.knots[i]) / denom : 0.0;
      if (a != 0.0) trip.emplace_back(i, i, a);
      if (a != 1.0) trip.emplace_back(i, i - 1, 1.0 - a);
    } else {
      trip.emplace_back(i, i - 1, 1.0);
    }
  }
  P.setFromTriplets(trip.begin(), trip.end());
  return P;
}
}  // namespace

Eigen::SparseMatrix<double> prolongation_matrix(const KnotVector& coarse,
                                                const KnotVector& fine) {
  require(coarse.degree == fine.degree, ErrorKind::Input,
          "prolongation_matrix: degree mismatch");
  // Knots of fine not present in coarse (multiset difference).
  std::vector<double> to_insert;
  {
    std::size_t ic = 0;
    for (double uf : fine.knots) {
      if (ic < coarse.knots.size() && std::abs(coarse.knots[ic] - uf) <= kKnotTol)
        ++ic;
      else
        to_insert.push_back(uf);
    }
    require(ic == coarse.knots.size(), ErrorKind::Input,
            "prolongation_matrix: fine knot vector does not refine the coarse one");
  }
  Eigen::SparseMatrix<double> P(coarse.num_basis(), coarse.num_basis());
  P.setIdentity();
  KnotVector work = coarse;
  for (double u : to_insert) {
    P = (insertion_matrix(work, u) * P).eval();
    work.knots.insert(std::upper_bound(work.knots.begin(), work.knots.end(), u), u);
  }
  return P;
}

KnotVector reversed(const KnotVector& kv) {
  KnotVector out;
  out.degree = kv.degree;
  out.knots.resize(kv.knots.size());
  const double a = kv.front(), b = kv.back();
  for (std::size_t i = 0; i < kv.knots.size(); ++i)
    out.knots[i] = a + b - kv.knots[kv.knots.size() - 1 - i];
  return out;
}

}  // namespace mp
