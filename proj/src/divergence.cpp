#include "orbitlab/divergence.hpp"

#include <unsupported/Eigen/Polynomials>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include "orbitlab/errors.hpp"
#include "orbitlab/flow.hpp"
#include "orbitlab/io.hpp"

namespace orbitlab {

bool DisplacementPolynomial::is_zero() const {
  return std::all_of(coefficients_double.begin(), coefficients_double.end(),
                     [](const Vector& c) { return c.isZero(0); });
}

RationalVector DisplacementPolynomial::at(const Rational& t) const {
  if (coefficients.empty()) throw DomainError("displacement polynomial has no exact coefficients");
  RationalVector out(algebra->dim(), Rational(0));
  Rational power(1);
  for (const auto& c : coefficients) {
    out = add(out, scale(c, power));
    power *= t;
  }
  return out;
}

Vector DisplacementPolynomial::at(double t) const {
  Vector out = Vector::Zero(algebra->dim());
  for (std::size_t j = coefficients_double.size(); j-- > 0;) out = out * t + coefficients_double[j];
  return out;
}

Vector DisplacementPolynomial::derivative(double t) const {
  Vector out = Vector::Zero(algebra->dim());
  for (std::size_t j = coefficients_double.size(); j-- > 1;) out = out * t + static_cast<double>(j) * coefficients_double[j];
  return out;
}

std::vector<double> DisplacementPolynomial::norm_squared() const {
  const auto n = coefficients_double.size();
  std::vector<double> q(n == 0 ? 1 : 2 * n - 1, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) q[i + j] += algebra->inner(coefficients_double[i], coefficients_double[j]);
  return q;
}

namespace {

DisplacementPolynomial trim(DisplacementPolynomial p) {
  while (p.coefficients_double.size() > 1 && p.coefficients_double.back().isZero(0)) {
    p.coefficients_double.pop_back();
    if (!p.coefficients.empty()) p.coefficients.pop_back();
  }
  return p;
}

}  // namespace

DisplacementPolynomial displacement_polynomial(const NilpotentDirection& u, const RationalVector& r) {
  const LieAlgebra& g = u.algebra();
  if (r.size() != g.dim()) throw DomainError("displacement_polynomial: dimension mismatch");
  DisplacementPolynomial p;
  p.algebra = u.algebra_ptr();
  RationalMatrix ad = g.ad(u.z());
  p.coefficients.push_back(RationalVector(g.dim(), Rational(0)));
  RationalVector term = r;
  Rational factor(1);
  for (std::size_t j = 1; j <= 2 * g.matrix_size() + 1; ++j) {
    term = ad * term;
    factor *= Rational(-1, static_cast<long>(j));
    factor.canonicalize();
    if (is_zero(term)) break;
    p.coefficients.push_back(scale(term, factor));
  }
  for (const auto& c : p.coefficients) p.coefficients_double.push_back(to_double(c));
  return trim(p);
}

DisplacementPolynomial displacement_polynomial(const NilpotentDirection& u, const Vector& r) {
  const LieAlgebra& g = u.algebra();
  if (static_cast<std::size_t>(r.size()) != g.dim()) throw DomainError("displacement_polynomial: dimension mismatch");
  DisplacementPolynomial p;
  p.algebra = u.algebra_ptr();
  Matrix ad = g.ad(to_double(u.z()));
  p.coefficients_double.push_back(Vector::Zero(g.dim()));
  Vector term = r;
  double factor = 1;
  for (std::size_t j = 1; j <= 2 * g.matrix_size() + 1; ++j) {
    term = ad * term;
    factor *= -1.0 / static_cast<double>(j);
    if (term.isZero(0)) break;
    p.coefficients_double.push_back(factor * term);
  }
  return trim(p);
}

namespace {

// Real roots of Σ c_k t^k inside [a, b].
std::vector<double> real_roots_in(std::vector<double> c, double a, double b) {
  while (c.size() > 1 && c.back() == 0) c.pop_back();
  std::vector<double> out;
  if (c.size() < 2) return out;
  Eigen::VectorXd coeffs = Eigen::Map<Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
  Eigen::PolynomialSolver<double, Eigen::Dynamic> solver(coeffs);
  for (const auto& z : solver.roots()) {
    if (std::abs(z.imag()) > 1e-7 * (1 + std::abs(z.real()))) continue;
    double t = z.real();
    // Newton polish.
    for (int it = 0; it < 8; ++it) {
      double f = 0, df = 0;
      for (std::size_t k = c.size(); k-- > 0;) {
        df = df * t + f;
        f = f * t + c[k];
      }
      if (df == 0) break;
      t -= f / df;
    }
    if (t >= a && t <= b) out.push_back(t);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> derivative_coeffs(const std::vector<double>& c) {
  std::vector<double> d;
  for (std::size_t k = 1; k < c.size(); ++k) d.push_back(static_cast<double>(k) * c[k]);
  return d;
}

}  // namespace

SupNorm sup_norm_on_interval(const DisplacementPolynomial& p, double a, double b, double tolerance) {
  if (!(b > a)) throw DomainError("sup_norm_on_interval: degenerate interval");
  const LieAlgebra& g = *p.algebra;
  SupNorm out;
  auto consider = [&](double t) {
    double v = g.norm(p.at(t));
    if (v > out.value) {
      out.value = v;
      out.argmax = t;
    }
  };
  consider(a);
  consider(b);
  for (double t : real_roots_in(derivative_coeffs(p.norm_squared()), a, b)) consider(t);
  // Lipschitz constant of ‖p‖ on [a, b].
  const double m = std::max(std::abs(a), std::abs(b));
  double lip = 0;
  for (std::size_t j = 1; j < p.coefficients_double.size(); ++j)
    lip += static_cast<double>(j) * g.norm(p.coefficients_double[j]) * std::pow(m, static_cast<double>(j - 1));
  std::size_t n = 64;
  while (true) {
    // Chebyshev nodes; the largest gap is below π(b−a)/(2n).
    for (std::size_t k = 0; k < n; ++k)
      consider(0.5 * (a + b) + 0.5 * (b - a) * std::cos(std::numbers::pi * (2.0 * k + 1) / (2.0 * n)));
    const double gap = std::numbers::pi * (b - a) / (2.0 * n);
    out.upper = out.value + 0.5 * lip * gap;
    if (out.upper - out.value <= tolerance * std::max(1.0, out.value) || n >= (1u << 16)) break;
    n *= 2;
  }
  return out;
}

std::string to_string(SplitCase c) { return c == SplitCase::Flat ? "Flat" : "Divergent"; }

CaseSplit case_split(const DisplacementPolynomial& p, double eps, double K, const ConstantLedger& ledger, double t0) {
  if (!(eps > 0 && eps < 1)) throw DomainError("case_split: eps must lie in (0, 1)");
  if (!(K > 0)) throw DomainError("case_split: K must be positive");
  CaseSplit out;
  out.t0 = t0;
  out.horizon = std::pow(eps, -K);
  if (!(out.horizon > t0)) throw DomainError("case_split: empty interval [t0, eps^-K]");
  out.sup = p.is_zero() ? 0.0 : sup_norm_on_interval(p, t0, out.horizon).value;
  if (out.sup <= 1) {
    out.kind = SplitCase::Flat;
    out.t1 = std::max(t0, std::pow(eps, -K / 2));
    out.short_sup = (p.is_zero() || out.t1 <= t0) ? 0.0 : sup_norm_on_interval(p, t0, out.t1).value;
    out.short_ratio = out.short_sup / (out.t1 * std::pow(eps, K));
    return out;
  }
  out.kind = SplitCase::Divergent;
  const double kappa6 = ledger.get("kappa6");
  const LieAlgebra& g = *p.algebra;
  double cross = t0;
  if (g.norm(p.at(t0)) < kappa6) {
    auto q = p.norm_squared();
    q[0] -= kappa6 * kappa6;
    auto roots = real_roots_in(q, t0, out.horizon);
    // First sign change of ‖p‖ − κ₆, bracketed by the roots and refined by bisection.
    double lo = t0, hi = out.horizon;
    for (double r : roots) {
      double probe = std::min(out.horizon, r + 1e-9 * (1 + std::abs(r)));
      if (g.norm(p.at(probe)) >= kappa6) {
        hi = probe;
        break;
      }
      lo = std::max(lo, r - 1e-9 * (1 + std::abs(r)));
      if (g.norm(p.at(lo)) >= kappa6) lo = t0;
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15 * (1 + hi); ++it) {
      double mid = 0.5 * (lo + hi);
      (g.norm(p.at(mid)) >= kappa6 ? hi : lo) = mid;
    }
    cross = hi;
  }
  out.crossing_time = 0.5 * cross;
  out.crossing_residual = std::abs(g.norm(p.at(cross)) - kappa6);
  return out;
}

Matrix orthonormal_frame(const LieAlgebra& g, const std::vector<RationalVector>& vectors) {
  Matrix out(g.dim(), 0);
  for (const auto& v : vectors) {
    Vector w = to_double(v);
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index c = 0; c < out.cols(); ++c) w -= g.inner(out.col(c), w) * out.col(c);
    double n = std::sqrt(std::max(0.0, g.inner(w, w)));
    if (n < 1e-12) continue;
    out.conservativeResize(Eigen::NoChange, out.cols() + 1);
    out.col(out.cols() - 1) = w / n;
  }
  return out;
}

Decomposition::Decomposition(AlgebraPtr g, std::vector<RationalVector> s, std::vector<RationalVector> r)
    : algebra_(std::move(g)), s_(span_basis(s)), r_(span_basis(r)) {
  const std::size_t m = algebra_->dim();
  if (s_.size() + r_.size() != m) throw DomainError("decomposition: dimensions do not add up");
  std::vector<RationalVector> all = s_;
  all.insert(all.end(), r_.begin(), r_.end());
  if (span_basis(all).size() != m) throw DomainError("decomposition: summands intersect");
  s_frame_ = orthonormal_frame(*algebra_, s_);
  r_frame_ = orthonormal_frame(*algebra_, r_);
  Matrix joint(m, m);
  joint << s_frame_, r_frame_;
  joint_ = Eigen::PartialPivLU<Matrix>(joint);
}

std::pair<Vector, Vector> Decomposition::components(const Vector& v) const {
  Vector c = joint_.solve(v);
  const auto k = static_cast<Eigen::Index>(s_.size());
  return {s_frame_ * c.head(k), r_frame_ * c.tail(c.size() - k)};
}

double distortion_constant(const LieAlgebra& g, const std::vector<RationalVector>& s,
                           const std::vector<RationalVector>& r) {
  if (s.empty() || r.empty()) return 1.0;
  Matrix fs = orthonormal_frame(g, s), fr = orthonormal_frame(g, r);
  Matrix cross = fs.transpose() * g.gram_double() * fr;
  double smax = Eigen::JacobiSVD<Matrix>(cross).singularValues()(0);
  return 1.0 - smax;
}

std::vector<RationalVector> orthogonal_complement(const LieAlgebra& g, const std::vector<RationalVector>& s) {
  auto basis = span_basis(s);
  if (basis.empty()) {
    std::vector<RationalVector> all;
    for (std::size_t i = 0; i < g.dim(); ++i) {
      RationalVector e(g.dim(), Rational(0));
      e[i] = 1;
      all.push_back(e);
    }
    return all;
  }
  RationalMatrix rows = RationalMatrix::from_rows(basis) * g.gram();
  return kernel(rows);
}

namespace {

// Particular solution of a·x = b (free variables zero), if consistent.
std::optional<RationalVector> solve_particular(const RationalMatrix& a, const RationalVector& b) {
  RationalMatrix aug(a.rows(), a.cols() + 1);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) aug(i, j) = a(i, j);
    aug(i, a.cols()) = b[i];
  }
  std::vector<std::size_t> pivots;
  RationalMatrix red = rref(aug, &pivots);
  RationalVector x(a.cols(), Rational(0));
  for (std::size_t r = 0; r < pivots.size(); ++r) {
    if (pivots[r] == a.cols()) return std::nullopt;
    x[pivots[r]] = red(r, a.cols());
  }
  return x;
}

RationalMatrix trace_form_rows(const LieAlgebra& g, const std::vector<RationalVector>& s) {
  RationalMatrix out(s.size(), g.dim());
  for (std::size_t i = 0; i < s.size(); ++i) {
    RationalMatrix si = g.element(s[i]);
    for (std::size_t j = 0; j < g.dim(); ++j) out(i, j) = (si * g.basis(j)).trace();
  }
  return out;
}

bool invariant_under(const LieAlgebra& g, const std::vector<RationalVector>& span,
                     const std::vector<RationalVector>& generators) {
  for (const auto& h : generators)
    for (const auto& v : span)
      if (!in_span(span, g.bracket(h, v))) return false;
  return true;
}

}  // namespace

Complement invariant_complement(const LieAlgebra& g, const std::vector<RationalVector>& s_in,
                                const std::vector<RationalVector>& h_generators) {
  auto s = span_basis(s_in);
  if (!invariant_under(g, s, h_generators)) throw DomainError("invariant_complement: s is not h-invariant");
  Complement out;
  if (s.size() == g.dim()) {
    out.method = "trivial";
    return out;
  }
  const std::size_t k = s.size(), m = g.dim();
  RationalMatrix tf = trace_form_rows(g, s);
  RationalMatrix restricted(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      Rational acc(0);
      for (std::size_t l = 0; l < m; ++l) acc += tf(i, l) * s[j][l];
      restricted(i, j) = acc;
    }
  if (k > 0 && determinant(restricted) != 0) {
    out.basis = kernel(tf);
    out.method = "trace-form orthogonal";
  } else {
    // P = S·Q with Q·S = 1 and Q·ad_h = C_h·Q, where ad_h S = S C_h.
    RationalMatrix smat(m, k);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < k; ++j) smat(i, j) = s[j][i];
    std::vector<RationalMatrix> rows;
    std::vector<Rational> rhs;
    auto var = [&](std::size_t a, std::size_t b) { return a * m + b; };  // Q(a, b)
    const std::size_t nv = k * m;
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t j = 0; j < k; ++j) {
        RationalMatrix row(1, nv);
        for (std::size_t b = 0; b < m; ++b) row(0, var(a, b)) = s[j][b];
        rows.push_back(row);
        rhs.push_back(a == j ? Rational(1) : Rational(0));
      }
    for (const auto& h : h_generators) {
      RationalMatrix ad = g.ad(h);
      RationalMatrix c(k, k);
      for (std::size_t j = 0; j < k; ++j) {
        auto coeff = solve_particular(smat, ad * s[j]);
        for (std::size_t a = 0; a < k; ++a) c(a, j) = (*coeff)[a];
      }
      // (Q ad)(a, b) − (C Q)(a, b) = 0.
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < m; ++b) {
          RationalMatrix row(1, nv);
          for (std::size_t l = 0; l < m; ++l) row(0, var(a, l)) += ad(l, b);
          for (std::size_t l = 0; l < k; ++l) row(0, var(l, b)) -= c(a, l);
          rows.push_back(row);
          rhs.push_back(Rational(0));
        }
    }
    RationalMatrix sys(rows.size(), nv);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < nv; ++j) sys(i, j) = rows[i](0, j);
    auto q = solve_particular(sys, rhs);
    if (!q) throw DomainError("invariant_complement: no h-invariant complement exists");
    RationalMatrix qm(k, m);
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < m; ++b) qm(a, b) = (*q)[var(a, b)];
    out.basis = kernel(qm);
    out.method = "equivariant projection";
  }
  std::vector<RationalVector> all = s;
  all.insert(all.end(), out.basis.begin(), out.basis.end());
  if (out.basis.size() + k != m || span_basis(all).size() != m || !invariant_under(g, out.basis, h_generators))
    throw std::logic_error("invariant_complement: postcondition failed");
  out.kappa1 = distortion_constant(g, s, out.basis);
  return out;
}

ProductSplit split_product(const LieAlgebra& g, const Matrix& a, const Matrix& first_frame, const Matrix& second_frame,
                           double tolerance, int max_iterations) {
  const auto m = static_cast<Eigen::Index>(g.dim());
  if (first_frame.cols() + second_frame.cols() != m) throw DomainError("split_product: frames do not span");
  Matrix joint(m, m);
  joint << first_frame, second_frame;
  Matrix la = logm(a);
  ProductSplit out;
  if (!la.allFinite()) {
    out.residual = std::numeric_limits<double>::infinity();
    return out;
  }
  const Vector target = g.coordinates(la);
  auto value = [&](const Vector& x) {
    Matrix prod = expm(g.element(Vector(first_frame * x.head(first_frame.cols())))) *
                  expm(g.element(Vector(second_frame * x.tail(second_frame.cols()))));
    return Vector(g.coordinates(logm(prod)) - target);
  };
  Eigen::PartialPivLU<Matrix> lu(joint);
  Vector x = lu.solve(target);
  Vector f = value(x);
  const double scale = 1 + target.norm();
  for (int it = 0; it < max_iterations; ++it) {
    out.iterations = it;
    if (!f.allFinite()) break;
    if (g.norm(f) <= tolerance * scale) {
      out.converged = true;
      break;
    }
    Matrix jac(m, m);
    const double h = 1e-6;
    for (Eigen::Index c = 0; c < m; ++c) {
      Vector e = Vector::Zero(m);
      e[c] = h;
      jac.col(c) = (value(Vector(x + e)) - value(Vector(x - e))) / (2 * h);
    }
    Vector dx = jac.partialPivLu().solve(f);
    // Damped step: halve until the residual decreases.
    double lam = 1;
    Vector xn = x - dx, fn = value(xn);
    while (!(g.norm(fn) < g.norm(f)) && lam > 1e-4) {
      lam *= 0.5;
      xn = x - lam * dx;
      fn = value(xn);
    }
    if (!(g.norm(fn) < g.norm(f))) {
      out.converged = g.norm(f) <= 1e3 * tolerance * scale;
      break;
    }
    x = xn;
    f = fn;
  }
  out.residual = g.norm(f);
  out.first = first_frame * x.head(first_frame.cols());
  out.second = second_frame * x.tail(second_frame.cols());
  return out;
}

BchSplit bch_split(const Decomposition& dec, const Vector& r1, const Vector& r2, double kappa6) {
  const LieAlgebra& g = dec.algebra();
  for (const Vector* r : {&r1, &r2}) {
    if (g.norm(*r) > kappa6 * (1 + 1e-12)) throw DomainError("bch_split: input outside the kappa6 ball");
    if (g.norm(dec.components(*r).first) > 1e-9 * (1 + g.norm(*r))) throw DomainError("bch_split: input not in r");
  }
  Matrix target = expm(g.element(r1)) * expm(g.element(Vector(-r2)));
  auto sp = split_product(g, target, dec.r_frame(), dec.s_frame(), 1e-14);
  if (!sp.converged) throw ConvergenceError("bch_split: Newton iteration did not converge");
  BchSplit out;
  out.z_r = sp.first;
  out.z_s = sp.second;
  out.iterations = sp.iterations;
  out.residual = norm(Matrix(expm(g.element(out.z_r)) * expm(g.element(out.z_s)) - target));
  const double diff = g.norm(Vector(r1 - r2)), zr = g.norm(out.z_r), zs = g.norm(out.z_s);
  const double slack = 1e-12;
  out.bounds_hold = zs <= diff + slack && kappa6 * diff <= zr + slack && zr <= diff / kappa6 + slack;
  return out;
}

double projective_distance(const Vector& v, const Vector& w, const Matrix& gram) {
  const double nv = std::sqrt(std::max(0.0, v.dot(gram * v))), nw = std::sqrt(std::max(0.0, w.dot(gram * w)));
  if (!(nv > 0) || !(nw > 0)) throw DomainError("projective_distance: zero vector");
  const double c = std::clamp(v.dot(gram * w) / (nv * nw), -1.0, 1.0);
  // ‖v̂ ± ŵ‖² = 2 ± 2c.
  return std::sqrt(std::max(0.0, 2 - 2 * std::abs(c)));
}

double projective_distance(const LieAlgebra& g, const Vector& v, const Vector& w) {
  return projective_distance(v, w, g.gram_double());
}

double projective_distance(const LieAlgebra& g, const WedgeVector& v, const WedgeVector& w) {
  if (v.degree() != w.degree()) throw DomainError("projective_distance: degree mismatch");
  if (v.is_zero() || w.is_zero()) throw DomainError("projective_distance: zero vector");
  Vector a = v.dense(), b = w.dense();
  a /= wedge_norm(g, v.degree(), a);
  b /= wedge_norm(g, w.degree(), b);
  return std::min(wedge_norm(g, v.degree(), Vector(a + b)), wedge_norm(g, v.degree(), Vector(a - b)));
}

double subspace_displacement(const LieAlgebra& g, const Matrix& m, const Matrix& frame) {
  Matrix moved = g.adjoint_matrix(m) * frame;
  const Matrix& gram = g.gram_double();
  const double self = (frame.transpose() * gram * frame).determinant();
  const double other = (moved.transpose() * gram * moved).determinant();
  const double cross = (frame.transpose() * gram * moved).determinant();
  const double c = std::clamp(std::abs(cross) / std::sqrt(self * other), 0.0, 1.0);
  return std::sqrt(std::max(0.0, 2 - 2 * c));
}

std::size_t cells_meeting_ball(std::size_t dim, double width, double radius, std::size_t cap) {
  if (!(width > 0) || !(radius >= 0)) throw DomainError("cells_meeting_ball: bad arguments");
  const long kmax = static_cast<long>(std::ceil(radius / width));
  std::size_t count = 0;
  // Depth-first over coordinates with the remaining squared radius.
  std::function<void(std::size_t, double)> rec = [&](std::size_t d, double budget) {
    if (d == dim) {
      if (++count > cap) throw BudgetExhausted("cell count exceeds cap");
      return;
    }
    for (long k = -kmax - 1; k <= kmax; ++k) {
      double lo = k * width, hi = (k + 1) * width;
      double dist = (lo <= 0 && hi >= 0) ? 0.0 : std::min(std::abs(lo), std::abs(hi));
      if (dist * dist <= budget) rec(d + 1, budget - dist * dist);
    }
  };
  rec(0, radius * radius);
  return count;
}

double default_box_exponent(const ConstantLedger& ledger, std::size_t dim_g) {
  return 1.0 / (4.0 * ledger.get("A7") * static_cast<double>(dim_g));
}

BoxCover::BoxCover(const Quotient& x, const Matrix& anchor, std::shared_ptr<const Decomposition> dec, double R,
                   double kappa, double radius_s, double radius_r, double height_cap)
    : quotient_(&x), anchor_(anchor), dec_(std::move(dec)), R_(R), kappa_(kappa), radius_s_(radius_s),
      radius_r_(radius_r) {
  if (!(R > 1)) throw DomainError("box_cover: R must exceed 1");
  if (!(kappa > 0 && kappa < 1)) throw DomainError("box_cover: kappa must lie in (0, 1)");
  if (!(radius_s > 0) || !(radius_r > 0)) throw DomainError("box_cover: radii must be positive");
  if (&dec_->algebra() != x.algebra().get() && dec_->algebra().dim() != x.algebra()->dim())
    throw DomainError("box_cover: decomposition of a different algebra");
  if (x.height(anchor) > height_cap) throw DomainError("box_cover: anchor lies beyond the height cap");
  anchor_reduced_ = reduce_point(anchor);
  if (anchor.rows() == 2 && self_distance(anchor_reduced_) <= 2 * (radius_s + radius_r))
    throw DomainError("box_cover: chart radius exceeds the injectivity estimate at the anchor");
  width_s_ = std::pow(R, -kappa);
  width_r_ = std::pow(R, -2.0);
}

std::optional<BoxCover::Location> BoxCover::locate(const Matrix& x) const {
  const LieAlgebra& g = dec_->algebra();
  auto d = closest_displacement(reduce_point(x), anchor_reduced_, 1.5 * (radius_s_ + radius_r_));
  if (!d) return std::nullopt;
  double res = 0;
  g.coordinates(d->log, &res);
  if (res > 1e-8 * (1 + norm(d->log))) return std::nullopt;  // not a point of this G-orbit
  auto sp = split_product(g, d->element, dec_->s_frame(), dec_->r_frame());
  if (!sp.converged) return std::nullopt;
  if (g.norm(sp.first) > radius_s_ || g.norm(sp.second) > radius_r_) return std::nullopt;
  Location loc;
  loc.ys = sp.first;
  loc.yr = sp.second;
  const Matrix& gram = g.gram_double();
  loc.cs = dec_->s_frame().transpose() * gram * sp.first;
  loc.cr = dec_->r_frame().transpose() * gram * sp.second;
  for (Eigen::Index i = 0; i < loc.cs.size(); ++i) loc.cell.s.push_back(static_cast<long>(std::floor(loc.cs[i] / width_s_)));
  for (Eigen::Index i = 0; i < loc.cr.size(); ++i) loc.cell.r.push_back(static_cast<long>(std::floor(loc.cr[i] / width_r_)));
  loc.element = d->element;
  loc.residual = sp.residual;
  return loc;
}

CellIndex BoxCover::cell_of(const Matrix& x) const {
  auto loc = locate(x);
  if (!loc) throw DomainError("box_cover: point outside the chart");
  return loc->cell;
}

Matrix BoxCover::point(const Vector& ys, const Vector& yr) const {
  const LieAlgebra& g = dec_->algebra();
  return anchor_ * expm(g.element(ys)) * expm(g.element(yr));
}

std::size_t BoxCover::s_cell_count(std::size_t cap) const {
  return cells_meeting_ball(dec_->dim_s(), width_s_, radius_s_, cap);
}

std::size_t BoxCover::r_cell_count(std::size_t cap) const {
  return cells_meeting_ball(dec_->dim_r(), width_r_, radius_r_, cap);
}

std::size_t pigeonhole_anchor(const std::vector<Matrix>& reduced_points, double radius, std::size_t candidates) {
  if (reduced_points.empty()) throw DomainError("pigeonhole_anchor: no points");
  candidates = std::max<std::size_t>(1, std::min(candidates, reduced_points.size()));
  std::size_t best = 0, best_count = 0;
  for (std::size_t c = 0; c < candidates; ++c) {
    const std::size_t idx = c * reduced_points.size() / candidates + reduced_points.size() / (2 * candidates);
    std::size_t count = 0;
    for (const auto& p : reduced_points) count += closest_displacement(p, reduced_points[idx], radius).has_value();
    if (count > best_count) {
      best_count = count;
      best = idx;
    }
  }
  return best;
}

std::string NearReturnSet::records() const {
  std::ostringstream os;
  os << "T\t" << format_double(T) << "\tmeasure\t" << format_double(measure) << "\tthreshold\t"
     << format_double(threshold) << "\tfired\t" << (fired ? 1 : 0) << "\n";
  for (const auto& [a, b] : intervals) os << "interval\t" << format_double(a) << "\t" << format_double(b) << "\n";
  for (const auto& [a, b] : excluded) os << "excluded\t" << format_double(a) << "\t" << format_double(b) << "\n";
  for (const auto& p : pairs)
    os << "pair\t" << format_double(p.s) << "\t" << format_double(p.t) << "\t" << format_double(p.size) << "\t"
       << format_double(p.projective) << "\t" << format_double(p.residual) << "\n";
  return os.str();
}

namespace {

std::vector<std::pair<double, double>> merge_runs(const std::vector<std::size_t>& idx, double step) {
  std::vector<std::pair<double, double>> out;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    double a = idx[k] * step, b = a + step;
    if (!out.empty() && k > 0 && idx[k] == idx[k - 1] + 1)
      out.back().second = b;
    else
      out.push_back({a, b});
  }
  return out;
}

}  // namespace

NearReturnSet near_return_detector(const Quotient& x, const Matrix& g, const NilpotentDirection& u,
                                   const std::vector<RationalVector>& s_in, double T, const ConstantLedger& ledger,
                                   const NearReturnOptions& opt) {
  const LieAlgebra& alg = *x.algebra();
  auto s = span_basis(s_in);
  if (s.empty() || alg.is_ideal(s))
    throw DomainError("near_return_detector: s is an ideal, so the closing-lemma test is vacuous");
  if (!(T > 1)) throw DomainError("near_return_detector: T must exceed 1");
  NearReturnSet out;
  out.T = T;
  out.kappa = default_box_exponent(ledger, alg.dim());
  out.threshold = std::pow(T, 1 - 1 / ledger.get("A7"));
  out.ledger_snapshot = ledger.str();
  const double height_cap = 1 / ledger.get("eta0");
  const double step = std::max(opt.step, T / static_cast<double>(opt.max_samples));
  const std::size_t n = static_cast<std::size_t>(std::floor(T / step));

  std::vector<Matrix> raw(n), reduced(n);
  std::vector<char> usable(n, 1);
  std::vector<std::size_t> excluded;
  for (std::size_t i = 0; i < n; ++i) {
    raw[i] = g * u.unipotent_at(static_cast<double>(i) * step);
    reduced[i] = reduce_point(raw[i]);
    if (x.height(raw[i]) > height_cap) {
      usable[i] = 0;
      excluded.push_back(i);
    }
  }
  out.excluded = merge_runs(excluded, step);
  out.excluded_measure = static_cast<double>(excluded.size()) * step;

  std::vector<Matrix> pool;
  std::vector<std::size_t> pool_index;
  for (std::size_t i = 0; i < n; ++i)
    if (usable[i]) {
      pool.push_back(reduced[i]);
      pool_index.push_back(i);
    }
  if (pool.empty()) return out;
  const std::size_t anchor = pool_index[pigeonhole_anchor(pool, opt.radius_s + opt.radius_r, opt.anchors)];

  auto dec = std::make_shared<Decomposition>(x.algebra(), s, orthogonal_complement(alg, s));
  double rs = opt.radius_s, rr = opt.radius_r;
  if (g.rows() == 2) {
    // Shrink the chart to the injectivity estimate at the anchor.
    const double fit = 0.45 * self_distance(reduced[anchor]) / (rs + rr);
    if (fit < 1) {
      rs *= fit;
      rr *= fit;
    }
  }
  BoxCover cover(x, raw[anchor], dec, T, out.kappa, rs, rr, height_cap);
  std::map<CellIndex, std::vector<std::size_t>> cells;
  for (std::size_t i : pool_index)
    if (auto loc = cover.locate(raw[i])) {
      ++out.located;
      cells[loc->cell].push_back(i);
    }
  if (cells.empty()) return out;
  auto fullest = std::max_element(cells.begin(), cells.end(),
                                  [](const auto& a, const auto& b) { return a.second.size() < b.second.size(); });
  const auto& times = fullest->second;
  out.cell_population = times.size();

  // Hypothesis (b) against the first time of the cell.
  const std::size_t ref = times.front();
  const Matrix frame = dec->s_frame();
  std::vector<std::size_t> accepted{ref};
  for (std::size_t k = 1; k < times.size(); ++k) {
    const std::size_t i = times[k];
    // x·u_s = x·u_t·g_st with s = ref.
    auto d = closest_displacement(reduced[ref], reduced[i], 2 * (rs + rr) + 1);
    if (!d) continue;
    ReturnPair pr;
    pr.s = static_cast<double>(ref) * step;
    pr.t = static_cast<double>(i) * step;
    Matrix gst = d->element;
    pr.size = operator_size(gst);
    pr.projective = subspace_displacement(alg, gst, frame);
    pr.residual = norm(Matrix(d->gamma * reduced[ref] - reduced[i] * gst)) / norm(reduced[ref]);
    if (pr.residual > 1e-8) continue;
    if (pr.size <= 2 && pr.projective <= 1 / T) {
      accepted.push_back(i);
      out.pairs.push_back(pr);
    }
  }
  std::sort(accepted.begin(), accepted.end());
  out.intervals = merge_runs(accepted, step);
  out.measure = static_cast<double>(accepted.size()) * step;
  out.fired = out.measure > out.threshold;
  return out;
}

PairSearchResult transversal_pair_search(const std::vector<Matrix>& points, const std::vector<char>& generic,
                                         const BoxCover& cover, double T, const ConstantLedger& ledger,
                                         const std::function<bool(const Matrix&)>& reflag,
                                         std::size_t max_candidates) {
  if (!generic.empty() && generic.size() != points.size())
    throw DomainError("transversal_pair_search: one flag per point");
  const LieAlgebra& g = cover.decomposition().algebra();
  const double a9 = ledger.get("A9");
  PairSearchResult out;
  out.lower = std::pow(T, -a9);
  out.upper = std::pow(T, -1 / a9);

  struct Located {
    std::size_t index;
    BoxCover::Location loc;
  };
  std::vector<Located> located;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!generic.empty() && !generic[i]) continue;
    if (auto loc = cover.locate(points[i])) located.push_back({i, *loc});
  }
  out.located = located.size();
  std::map<std::vector<long>, std::size_t> rcells;
  for (const auto& l : located) ++rcells[l.loc.cell.r];
  out.distinct_r_cells = rcells.size();
  if (rcells.size() < 2) {
    out.diagnostic = "NotFound: insufficient distinct r-cells (" + std::to_string(rcells.size()) + " reached by " +
                     std::to_string(located.size()) + " located generic points)";
    return out;
  }

  // Candidate pairs in distinct 𝔯-cells, chart distance in 𝔯 closest to the
  // middle of the window (log scale) first.
  const double middle = 0.5 * std::log(out.lower * out.upper);
  std::vector<std::tuple<double, std::size_t, std::size_t>> cand;
  for (std::size_t a = 0; a < located.size(); ++a)
    for (std::size_t b = a + 1; b < located.size(); ++b) {
      if (located[a].loc.cell.r == located[b].loc.cell.r) continue;
      double d = (located[a].loc.cr - located[b].loc.cr).norm();
      if (d >= 0.5 * out.lower && d <= 2 * out.upper) cand.emplace_back(std::abs(std::log(d) - middle), a, b);
    }
  std::sort(cand.begin(), cand.end());
  const Matrix& sf = cover.decomposition().s_frame();
  const Matrix& rf = cover.decomposition().r_frame();
  for (const auto& [d, a, b] : cand) {
    if (out.candidates_tried >= max_candidates) break;
    ++out.candidates_tried;
    Matrix p1 = reduce_point(points[located[a].index]), p2 = reduce_point(points[located[b].index]);
    // p₁·A = γ·p₂ with A near 1; split A = exp(Z₁)exp(r).
    auto disp = closest_displacement(p2, p1, 2 * (cover.radius_s() + cover.radius_r()) + 1);
    if (!disp) continue;
    auto sp = split_product(g, disp->element, sf, rf);
    if (!sp.converged) continue;
    const double rn = g.norm(sp.second);
    if (rn < out.lower || rn > out.upper) continue;
    TransversalPair pair;
    pair.z1 = sp.first;
    pair.r = sp.second;
    pair.norm = rn;
    pair.x1 = p1 * expm(g.element(sp.first));
    pair.x2 = pair.x1 * expm(g.element(sp.second));
    pair.residual = norm(Matrix(pair.x2 - disp->gamma * p2)) / norm(p2);
    if (reflag && !(reflag(pair.x1) && reflag(pair.x2))) continue;
    if (pair.norm < out.lower || pair.norm > out.upper) throw std::logic_error("pair outside the norm window");
    out.pair = pair;
    out.diagnostic = "found";
    return out;
  }
  out.diagnostic = "NotFound: no candidate pair in the norm window [" + format_double(out.lower) + ", " +
                   format_double(out.upper) + "] (" + std::to_string(cand.size()) + " candidates, " +
                   std::to_string(out.candidates_tried) + " tried)";
  return out;
}

}  // namespace orbitlab
