#include "orbitlab/flow.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "orbitlab/errors.hpp"
#include "orbitlab/io.hpp"

namespace orbitlab {

double bump_profile(double rho, int exponent) {
  if (!(rho < 1)) return 0;
  return std::pow(1 - rho * rho, exponent);
}

std::string TestFunction::descriptor() const {
  std::ostringstream os;
  os << "bump center=[";
  for (Eigen::Index i = 0; i < center.size(); ++i) os << (i ? "," : "") << format_double(center.data()[i]);
  os << "] scale=" << format_double(scale) << " exponent=" << exponent << " weight=" << weight_degree;
  return os.str();
}

Matrix reduce_point(const Matrix& g) {
  if (g.rows() == 2) return reduce_sl2(g).representative;
  return reduce_rows(g).representative;
}

TestFunction make_test_function(const Matrix& center, double scale, int exponent, int weight_degree) {
  if (!(scale > 0)) throw DomainError("test function scale must be positive");
  if (exponent < 2) throw DomainError("test function exponent must be at least 2");
  TestFunction f;
  f.center = center;
  f.reduced = reduce_point(center);
  f.scale = scale;
  f.exponent = exponent;
  f.weight_degree = weight_degree;
  return f;
}

double evaluate(const TestFunction& f, const Matrix& g) {
  double d = lattice_distance(reduce_point(g), f.reduced, f.scale);
  return std::isfinite(d) ? bump_profile(d / f.scale, f.exponent) : 0.0;
}

std::string battery_hash(const Battery& battery) {
  std::string all;
  for (const auto& f : battery) all += f.descriptor() + "\n";
  return content_hash(all);
}

Eigen::Matrix2d log_sl2(const Eigen::Matrix2d& a) {
  // A = cosh(μ)·1 + (sinh μ/μ)·Y for traceless Y with μ² = −det Y.
  const double s = 0.5 * a.trace();
  double factor;
  if (std::abs(s - 1) < 1e-6) {
    factor = 1 - (s - 1) / 3;
  } else if (s > 1) {
    double mu = std::acosh(s);
    factor = mu / std::sinh(mu);
  } else if (s > -1) {
    double th = std::acos(s);
    factor = th / std::sin(th);
  } else {
    return Eigen::Matrix2d::Constant(std::numeric_limits<double>::quiet_NaN());
  }
  return factor * (a - s * Eigen::Matrix2d::Identity());
}

namespace {

using Mat2L = Eigen::Matrix<long double, 2, 2>;

template <class M>
void gauss_reduce(M& b, M& gamma) {
  for (int iter = 0; iter < 400; ++iter) {
    auto n0 = b.row(0).squaredNorm(), n1 = b.row(1).squaredNorm();
    if (n1 < n0) {
      M s;
      s << 0, 1, -1, 0;
      b = s * b;
      gamma = s * gamma;
      continue;
    }
    auto q = std::round(b.row(0).dot(b.row(1)) / n0);
    if (q == 0) break;
    b.row(1) -= q * b.row(0);
    gamma.row(1) -= q * gamma.row(0);
  }
}

// min over γ near round(c x⁻¹) of ‖log(c⁻¹γx)‖, or ∞ beyond the cutoff.
double distance2(const Eigen::Matrix2d& x, const Eigen::Matrix2d& c, const Eigen::Matrix2d& cinv, double cutoff) {
  Eigen::Matrix2d xinv;
  xinv << x(1, 1), -x(0, 1), -x(1, 0), x(0, 0);
  xinv /= x.determinant();
  Eigen::Matrix2d guess = c * xinv;
  Eigen::Matrix2d base = guess.array().round().matrix();
  int amb[4];
  int na = 0;
  for (int k = 0; k < 4; ++k)
    if (std::abs(guess.data()[k] - base.data()[k]) > 0.2) amb[na++] = k;
  const double bound = std::expm1(cutoff);
  double best = std::numeric_limits<double>::infinity();
  for (int mask = 0; mask < (1 << na); ++mask) {
    Eigen::Matrix2d gamma = base;
    for (int b = 0; b < na; ++b)
      if (mask >> b & 1) gamma.data()[amb[b]] += guess.data()[amb[b]] > base.data()[amb[b]] ? 1.0 : -1.0;
    if (std::abs(gamma.determinant() - 1.0) > 1e-9) continue;
    Eigen::Matrix2d a = cinv * gamma * x;
    Eigen::Matrix2d d = a - Eigen::Matrix2d::Identity();
    if (2 * d.norm() > bound) continue;
    Eigen::Matrix2d y = log_sl2(a);
    if (!y.allFinite()) continue;
    best = std::min(best, 2 * y.norm());
  }
  return best <= cutoff ? best : std::numeric_limits<double>::infinity();
}

}  // namespace

OrbitEvaluator::OrbitEvaluator(const Matrix& x0, const NilpotentDirection& u, const Battery& battery)
    : x0_(x0), u_(&u), battery_(battery) {
  const auto n = x0.rows();
  if (static_cast<std::size_t>(n) != u.algebra().matrix_size()) throw DomainError("OrbitEvaluator: size mismatch");
  gamma_ = Matrix::Identity(n, n);
  fast2_ = n == 2;
  if (fast2_) {
    x02_ = x0;
    z2_ = u.matrix().to_double();
    gamma2_.setIdentity();
    for (const auto& f : battery_) {
      centers2_.push_back(f.reduced);
      centers2_inv_.push_back(Eigen::Matrix2d(f.reduced).inverse());
    }
  }
}

Matrix OrbitEvaluator::point(double t) const { return x0_ * u_->unipotent_at(t); }

void OrbitEvaluator::values(double t, double* out) {
  if (fast2_) {
    // Extended precision keeps γ·x₀·u_t accurate at large t.
    Mat2L x = x02_.cast<long double>();
    Mat2L p = x + static_cast<long double>(t) * (x * z2_.cast<long double>());
    Mat2L gamma = gamma2_.cast<long double>();
    Mat2L q = gamma * p;
    gauss_reduce(q, gamma);
    gamma2_ = gamma.cast<double>();
    Eigen::Matrix2d qd = q.cast<double>();
    for (std::size_t j = 0; j < battery_.size(); ++j) {
      double d = distance2(qd, centers2_[j], centers2_inv_[j], battery_[j].scale);
      out[j] = std::isfinite(d) ? bump_profile(d / battery_[j].scale, battery_[j].exponent) : 0.0;
    }
    return;
  }
  Matrix p = gamma_ * point(t);
  Reduction r = reduce_rows(p);
  gamma_ = r.gamma * gamma_;
  for (std::size_t j = 0; j < battery_.size(); ++j) {
    double d = lattice_distance(r.representative, battery_[j].reduced, battery_[j].scale);
    out[j] = std::isfinite(d) ? bump_profile(d / battery_[j].scale, battery_[j].exponent) : 0.0;
  }
}

std::vector<QuadratureResult> window_average(const std::function<void(double, double*)>& f, std::size_t components,
                                             double a, double b, double step) {
  if (!(b > a)) throw DomainError("window_average: empty interval");
  if (!(step > 0)) throw DomainError("window_average: step must be positive");
  std::size_t m = static_cast<std::size_t>(std::ceil((b - a) / step));
  m = std::max<std::size_t>(4, (m + 3) / 4 * 4);
  const double h = (b - a) / m;
  std::vector<double> fine(components, 0.0), coarse(components, 0.0), v(components);
  for (std::size_t i = 0; i <= m; ++i) {
    const double t = i == m ? b : a + h * static_cast<double>(i);
    f(t, v.data());
    const double wf = (i == 0 || i == m) ? 1 : (i % 2 ? 4 : 2);
    double wc = 0;
    if (i % 2 == 0) wc = (i == 0 || i == m) ? 1 : ((i / 2) % 2 ? 4 : 2);
    for (std::size_t c = 0; c < components; ++c) {
      fine[c] += wf * v[c];
      coarse[c] += wc * v[c];
    }
  }
  std::vector<QuadratureResult> out(components);
  for (std::size_t c = 0; c < components; ++c) {
    const double sf = fine[c] * h / 3, sc = coarse[c] * 2 * h / 3;
    out[c].value = sf / (b - a);
    out[c].error = std::abs(sf - sc) / (b - a) + 1e-15 * std::abs(out[c].value);
  }
  return out;
}

QuadratureResult window_average(const std::function<double(double)>& f, double a, double b, double step) {
  return window_average([&](double t, double* out) { out[0] = f(t); }, 1, a, b, step)[0];
}

std::pair<double, double> window_bounds(long n, double K) {
  if (n < 1) throw DomainError("window_bounds: n must be positive");
  if (!(K > 0)) throw DomainError("window_bounds: K must be positive");
  return {std::pow(static_cast<double>(n), K), std::pow(static_cast<double>(n + 1), K)};
}

namespace {

void guard_step(const Battery& battery, double step) {
  for (const auto& f : battery)
    if (step > f.scale / 10 * (1 + 1e-12))
      throw DomainError("quadrature step " + format_double(step) + " exceeds scale/10 of a test function");
}

}  // namespace

QuadratureResult birkhoff_window_average(const Matrix& x0, const NilpotentDirection& u, const TestFunction& f, long n,
                                         double K, double step) {
  guard_step({f}, step);
  auto [a, b] = window_bounds(n, K);
  OrbitEvaluator ev(x0, u, {f});
  return window_average([&](double t, double* out) { ev.values(t, out); }, 1, a, b, step)[0];
}

double discrepancy(const Matrix& x0, const NilpotentDirection& u, const TestFunction& f, long n, double K, double step,
                   double reference_value) {
  return birkhoff_window_average(x0, u, f, n, K, step).value - reference_value;
}

double haar_jacobian(const LieAlgebra& g, const Vector& coords) {
  Matrix a = g.ad(coords);
  const auto m = a.rows();
  Matrix sum = Matrix::Identity(m, m);
  Matrix term = Matrix::Identity(m, m);
  for (int k = 1; k < 60; ++k) {
    term = -(term * a) / static_cast<double>(k + 1);
    sum += term;
    if (term.norm() < 1e-18 * sum.norm()) break;
  }
  return std::abs(sum.determinant());
}

double self_distance(const Matrix& c, int box) {
  if (c.rows() != 2) throw DomainError("self_distance is implemented for 2x2 matrices");
  Matrix cinv = c.inverse();
  double best = std::numeric_limits<double>::infinity();
  for (int a = -box; a <= box; ++a)
    for (int b = -box; b <= box; ++b)
      for (int cc = -box; cc <= box; ++cc)
        for (int d = -box; d <= box; ++d) {
          if (a * d - b * cc != 1) continue;
          if (b == 0 && cc == 0 && std::abs(a) == 1) continue;
          Matrix gamma(2, 2);
          gamma << a, b, cc, d;
          // −γ is the same point of PSL₂; take the closer sign.
          for (double s : {1.0, -1.0}) {
            Matrix diff = s * cinv * gamma * c - Matrix::Identity(2, 2);
            // ‖Y‖ ≥ log(1 + ‖e^Y − 1‖).
            best = std::min(best, std::log1p(norm(diff)));
          }
        }
  return best;
}

ReferenceValue reference_sl2(const Quotient& x, const TestFunction& f) {
  if (x.kind() != QuotientKind::SL2Z) throw DomainError("reference_sl2 needs SL2(Z)");
  if (self_distance(f.reduced) <= 2 * f.scale)
    throw DomainError("reference_sl2: support ball does not embed at this center");
  const LieAlgebra& g = *x.algebra();
  const Matrix& frame = g.orthonormal_frame();
  auto integrate = [&](int nr, int nt, int np) {
    // Gauss–Legendre in radius and cos θ, uniform in φ.
    auto gl = [](int n) {
      std::vector<std::pair<double, double>> out;
      for (int i = 1; i <= n; ++i) {
        double xk = std::cos(std::numbers::pi * (i - 0.25) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
          double p0 = 1, p1 = xk;
          for (int k = 2; k <= n; ++k) {
            double p2 = ((2 * k - 1) * xk * p1 - (k - 1) * p0) / k;
            p0 = p1;
            p1 = p2;
          }
          double dp = n * (xk * p1 - p0) / (xk * xk - 1);
          double dx = p1 / dp;
          xk -= dx;
          if (std::abs(dx) < 1e-16) break;
        }
        double p0 = 1, p1 = xk;
        for (int k = 2; k <= n; ++k) {
          double p2 = ((2 * k - 1) * xk * p1 - (k - 1) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        double dp = n * (xk * p1 - p0) / (xk * xk - 1);
        out.push_back({xk, 2 / ((1 - xk * xk) * dp * dp)});
      }
      return out;
    };
    auto rq = gl(nr), tq = gl(nt);
    const double r = f.scale;
    double total = 0;
    for (auto [xr, wr] : rq) {
      double rho = 0.5 * r * (xr + 1);
      double prof = bump_profile(rho / r, f.exponent);
      double shell = 0;
      for (auto [ct, wt] : tq) {
        double st = std::sqrt(1 - ct * ct);
        for (int k = 0; k < np; ++k) {
          double ph = 2 * std::numbers::pi * k / np;
          Vector y(3);
          y << rho * st * std::cos(ph), rho * st * std::sin(ph), rho * ct;
          shell += wt * (2 * std::numbers::pi / np) * haar_jacobian(g, frame * y);
        }
      }
      total += 0.5 * r * wr * rho * rho * prof * shell;
    }
    return total;
  };
  double fine = integrate(40, 20, 40), coarse = integrate(20, 10, 20);
  const double vol = *x.volume();
  return {fine / vol, std::abs(fine - coarse) / vol, "exact: exponential-chart quadrature / vol(SL2(Z)\\SL2(R))"};
}

std::vector<ReferenceValue> reference_mixing(const Quotient& x, const Battery& battery, const Matrix& start,
                                             std::size_t steps, std::size_t burn_in, double step_radius,
                                             std::uint64_t seed) {
  if (steps < 32) throw DomainError("reference_mixing: too few steps");
  const LieAlgebra& alg = *x.algebra();
  const Matrix& frame = alg.orthonormal_frame();
  const auto m = static_cast<Eigen::Index>(alg.dim());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif;
  Matrix g = reduce_point(start);
  const std::size_t batches = 32, per = steps / batches;
  std::vector<std::vector<double>> batch_sums(battery.size(), std::vector<double>(batches, 0.0));
  for (std::size_t i = 0; i < burn_in + batches * per; ++i) {
    Vector y(m);
    for (Eigen::Index k = 0; k < m; ++k) y[k] = gauss(rng);
    y *= step_radius * std::pow(unif(rng), 1.0 / m) / y.norm();
    // Γ-classes in SL_N(ℤ)\SL_N(ℝ) are all the test functions see, so the
    // walk may be reduced by any integral matrix.
    g = reduce_point(Matrix(g * expm(alg.element(Vector(frame * y)))));
    if (i < burn_in) continue;
    const std::size_t b = (i - burn_in) / per;
    for (std::size_t j = 0; j < battery.size(); ++j) batch_sums[j][b] += evaluate(battery[j], g);
  }
  std::vector<ReferenceValue> out(battery.size());
  for (std::size_t j = 0; j < battery.size(); ++j) {
    double mean = 0, sq = 0;
    for (double s : batch_sums[j]) mean += s / per;
    mean /= batches;
    for (double s : batch_sums[j]) sq += (s / per - mean) * (s / per - mean);
    out[j].value = mean;
    out[j].error = std::sqrt(sq / (batches - 1) / batches);
    out[j].method = "estimated: mixing random walk, steps=" + std::to_string(steps) +
                    " burn_in=" + std::to_string(burn_in) + " seed=" + std::to_string(seed);
  }
  return out;
}

Matrix sample_haar_sl2(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double y0 = std::sqrt(3.0) / 2;
  while (true) {
    double x = unif(rng) - 0.5;
    double u = unif(rng);
    if (u == 0) continue;
    double y = y0 / u;  // density ∝ y⁻² on [y0, ∞)
    if (x * x + y * y < 1) continue;
    double th = std::numbers::pi * unif(rng);
    Matrix n(2, 2), a(2, 2), k(2, 2);
    n << 1, x, 0, 1;
    a << std::sqrt(y), 0, 0, 1 / std::sqrt(y);
    k << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    return n * a * k;
  }
}

Matrix closed_horocycle_point(double height) {
  if (!(height > 0)) throw DomainError("closed_horocycle_point: height must be positive");
  Matrix g(2, 2);
  g << std::sqrt(height), 0, 0, 1 / std::sqrt(height);
  return g;
}

std::string DiscrepancyReport::records() const {
  std::ostringstream os;
  for (const auto& w : windows)
    os << w.n << "\t" << format_double(w.lo) << "\t" << format_double(w.hi) << "\t" << format_double(w.average) << "\t"
       << format_double(w.discrepancy) << "\t" << format_double(w.error) << "\n";
  return os.str();
}

DiscrepancyTable discrepancy_table(const Matrix& x0, const NilpotentDirection& u, const Battery& battery,
                                   const std::vector<double>& references, long k1, long k2, double K, double step) {
  if (k1 < 1 || k2 < k1) throw DomainError("discrepancy_table: need 1 <= k1 <= k2");
  if (references.size() != battery.size()) throw DomainError("discrepancy_table: one reference per function");
  guard_step(battery, step);
  DiscrepancyTable table;
  table.k1 = k1;
  table.k2 = k2;
  table.values = Matrix::Zero(k2 - k1 + 1, battery.size());
  table.errors = Matrix::Zero(k2 - k1 + 1, battery.size());
  OrbitEvaluator ev(x0, u, battery);
  for (long n = k1; n <= k2; ++n) {
    auto [a, b] = window_bounds(n, K);
    auto res = window_average([&](double t, double* out) { ev.values(t, out); }, battery.size(), a, b, step);
    for (std::size_t j = 0; j < battery.size(); ++j) {
      table.values(n - k1, j) = res[j].value - references[j];
      table.errors(n - k1, j) = res[j].error;
    }
  }
  return table;
}

DiscrepancyReport discrepancy_report(const Matrix& x0, const NilpotentDirection& u, const TestFunction& f, long k1,
                                     long k2, double K, double step, const ReferenceValue& reference) {
  auto table = discrepancy_table(x0, u, {f}, {reference.value}, k1, k2, K, step);
  DiscrepancyReport rep;
  rep.reference_value = reference.value;
  rep.reference_method = reference.method;
  rep.K = K;
  rep.step = step;
  for (long n = k1; n <= k2; ++n) {
    auto [a, b] = window_bounds(n, K);
    WindowRecord w{n, a, b, table.values(n - k1, 0) + reference.value, table.values(n - k1, 0),
                   table.errors(n - k1, 0)};
    rep.error = std::max(rep.error, w.error);
    rep.windows.push_back(w);
  }
  return rep;
}

namespace {

// Nondecreasing index words of length k over m letters.
void words(std::size_t m, std::size_t k, std::size_t start, std::vector<std::size_t>& cur,
           std::vector<std::vector<std::size_t>>& out) {
  if (cur.size() == k) {
    out.push_back(cur);
    return;
  }
  for (std::size_t i = start; i < m; ++i) {
    cur.push_back(i);
    words(m, k, i, cur, out);
    cur.pop_back();
  }
}

}  // namespace

double sobolev_surrogate(const Quotient& x, const TestFunction& f, int d, const SobolevOptions& opt) {
  if (d < 0) throw DomainError("sobolev_surrogate: negative degree");
  if (d > f.exponent - 2) throw DomainError("sobolev_surrogate: degree exceeds the smoothness of the profile");
  const LieAlgebra& alg = *x.algebra();
  const auto m = static_cast<Eigen::Index>(alg.dim());
  const Matrix& frame = alg.orthonormal_frame();
  const double h = opt.fd_fraction * f.scale;
  std::vector<Matrix> plus(m), minus(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    Matrix z = alg.element(Vector(frame.col(i)));
    plus[i] = expm(Matrix(h * z));
    minus[i] = expm(Matrix(-h * z));
  }
  std::vector<std::vector<std::size_t>> monomials;
  for (int k = 0; k <= d; ++k) {
    std::vector<std::size_t> cur;
    words(m, k, 0, cur, monomials);
  }
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif;
  const double radius = f.scale * (1 + 2 * opt.fd_fraction * std::max(d, 1));
  const double ball = std::pow(std::numbers::pi, m / 2.0) / std::tgamma(m / 2.0 + 1) * std::pow(radius, m);
  double acc = 0;
  for (std::size_t s = 0; s < opt.samples; ++s) {
    Vector y(m);
    for (Eigen::Index k = 0; k < m; ++k) y[k] = gauss(rng);
    y *= radius * std::pow(unif(rng), 1.0 / m) / y.norm();
    Vector coords = frame * y;
    Matrix p = f.center * expm(alg.element(coords));
    double weight = haar_jacobian(alg, coords);
    if (d > 0) weight *= std::pow(x.height(p) + 1, 2 * d);
    double sum = 0;
    for (const auto& w : monomials) {
      const std::size_t k = w.size();
      double val = 0;
      for (std::size_t mask = 0; mask < (std::size_t{1} << k); ++mask) {
        Matrix q = p;
        int sign = 1;
        for (std::size_t b = 0; b < k; ++b) {
          bool neg = mask >> b & 1;
          q = q * (neg ? minus[w[b]] : plus[w[b]]);
          if (neg) sign = -sign;
        }
        val += sign * evaluate(f, q);
      }
      val /= std::pow(2 * h, static_cast<double>(k));
      sum += val * val;
    }
    acc += weight * sum;
  }
  return std::sqrt(ball * acc / static_cast<double>(opt.samples));
}

GenericityCertificate certify(const DiscrepancyTable& table, const std::vector<double>& sobolev, double tolerance,
                              const std::string& hash) {
  if (sobolev.size() != static_cast<std::size_t>(table.values.cols()))
    throw DomainError("certify: one Sobolev value per function");
  GenericityCertificate c;
  c.k1 = table.k1;
  c.k2 = table.k2;
  c.battery_hash = hash;
  c.scope = "finite battery " + hash + ", not all smooth functions";
  c.margin = std::numeric_limits<double>::infinity();
  for (long n = table.k1; n <= table.k2; ++n)
    for (Eigen::Index j = 0; j < table.values.cols(); ++j)
      c.margin = std::min(c.margin, tolerance * sobolev[j] / n - std::abs(table.values(n - table.k1, j)));
  c.passed = c.margin >= 0;
  return c;
}

GenericityCertificate is_generic(const Matrix& x0, const NilpotentDirection& u, const Battery& battery,
                                 const std::vector<double>& sobolev, const std::vector<double>& references, long k1,
                                 long k2, double K, double step, double tolerance) {
  auto table = discrepancy_table(x0, u, battery, references, k1, k2, K, step);
  return certify(table, sobolev, tolerance, battery_hash(battery));
}

double generic_fraction(const LieAlgebra& g, const std::vector<FlowSample>& samples, const NilpotentDirection& u,
                        const Battery& battery, const std::vector<double>& sobolev,
                        const std::vector<double>& references, long k1, long k2, double K, double step,
                        double tolerance) {
  if (samples.empty()) throw DomainError("generic_fraction: empty sample");
  std::size_t failed = 0;
  for (const auto& s : samples) {
    Matrix p = s.x * u.unipotent_at(s.t) * expm(g.element(s.Z));
    failed += !is_generic(p, u, battery, sobolev, references, k1, k2, K, step, tolerance).passed;
  }
  return static_cast<double>(failed) / samples.size();
}

double almost_invariance(const std::vector<WeightedPoint>& sample, const Matrix& mover, const Battery& battery,
                         const std::vector<double>& sobolev) {
  if (battery.empty()) throw DomainError("almost_invariance: empty battery");
  if (sobolev.size() != battery.size()) throw DomainError("almost_invariance: one Sobolev value per function");
  double total = 0;
  for (const auto& p : sample) total += p.weight;
  if (!(total > 0)) throw DomainError("almost_invariance: empty sample");
  double eps = 0;
  for (std::size_t j = 0; j < battery.size(); ++j) {
    if (!(sobolev[j] > 0)) throw DomainError("almost_invariance: vanishing Sobolev norm");
    double a = 0, b = 0;
    for (const auto& p : sample) {
      a += p.weight * evaluate(battery[j], p.g);
      b += p.weight * evaluate(battery[j], p.g * mover);
    }
    eps = std::max(eps, std::abs(b - a) / total / sobolev[j]);
  }
  return eps;
}

double almost_invariance(const LieAlgebra& g, const std::vector<WeightedPoint>& sample, const Vector& Z,
                         const Battery& battery, const std::vector<double>& sobolev) {
  double eps = 0;
  for (double t : {-2.0, -1.0, -0.5, 0.5, 1.0, 2.0})
    eps = std::max(eps, almost_invariance(sample, expm(g.element(Vector(t * Z))), battery, sobolev));
  return eps;
}

}  // namespace orbitlab
