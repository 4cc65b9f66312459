#include "orbitlab/experiments.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "orbitlab/errors.hpp"
#include "orbitlab/parallel.hpp"

namespace orbitlab {

namespace {

using json = nlohmann::json;

std::optional<RationalVector> solve_exact(const RationalMatrix& a, const RationalVector& b) {
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

RationalVector combination(const std::vector<RationalVector>& basis, const RationalVector& c) {
  RationalVector out(basis.front().size(), Rational(0));
  for (std::size_t i = 0; i < basis.size(); ++i)
    if (c[i] != 0) out = add(out, scale(basis[i], c[i]));
  return out;
}

// v = λ·z, or nothing.
std::optional<Rational> multiple_of(const RationalVector& v, const RationalVector& z) {
  std::optional<Rational> lambda;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (z[i] == 0) {
      if (v[i] != 0) return std::nullopt;
      continue;
    }
    Rational c = v[i] / z[i];
    if (lambda && *lambda != c) return std::nullopt;
    lambda = c;
  }
  return lambda ? lambda : Rational(0);
}

bool integral_matrix(const RationalMatrix& m) {
  for (const auto& e : m.flat())
    if (e.get_den() != 1) return false;
  return true;
}

const std::string& need(const ConfigDoc& doc, const std::string& section, const std::string& key) {
  auto s = doc.find(section);
  if (s == doc.end() || !s->second.count(key)) throw DomainError("config: missing " + section + "." + key);
  return s->second.at(key);
}

std::optional<std::string> maybe(const ConfigDoc& doc, const std::string& section, const std::string& key) {
  auto s = doc.find(section);
  if (s == doc.end()) return std::nullopt;
  auto it = s->second.find(key);
  if (it == s->second.end()) return std::nullopt;
  return it->second;
}

std::vector<RationalVector> default_directions(const LieAlgebra& alg, const std::optional<Sl2Triple>& triple,
                                               const std::vector<RationalVector>& h) {
  std::vector<RationalVector> out;
  auto push = [&](const RationalVector& v) {
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  };
  if (triple) {
    push(triple->z);
    push(triple->f);
  }
  for (const auto& v : h) push(v);
  (void)alg;
  return out;
}

std::optional<RationalVector> first_nilpotent(const LieAlgebra& alg, const std::vector<RationalVector>& h) {
  for (const auto& v : h)
    if (is_nilpotent(alg.element(v))) return v;
  return std::nullopt;
}

// Bumps keep the battery parameters of the first member when rebuilt.
void rebuild_battery(Scenario& sc) {
  if (sc.battery.empty()) return;
  const auto& f = sc.battery.front();
  sc.battery = orbit_battery(sc, sc.battery.size(), f.scale, f.exponent);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(b >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

Matrix sl2_point(double x, double y, double theta) {
  Matrix n(2, 2), a(2, 2), k(2, 2);
  n << 1, x, 0, 1;
  a << std::sqrt(y), 0, 0, 1 / std::sqrt(y);
  k << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  return n * a * k;
}

}  // namespace

std::string vector_string(const RationalVector& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + to_string(v[i]);
  return out + "]";
}

std::string vectors_string(const std::vector<RationalVector>& vs) {
  std::string out = "[";
  for (std::size_t i = 0; i < vs.size(); ++i) out += (i ? ", " : "") + vector_string(vs[i]);
  return out + "]";
}

std::string matrix_string(const Matrix& m) {
  std::string out = "[";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out += i ? ", [" : "[";
    for (Eigen::Index j = 0; j < m.cols(); ++j) out += (j ? ", " : "") + format_double(m(i, j));
    out += "]";
  }
  return out + "]";
}

std::string rational_matrix_string(const RationalMatrix& m) {
  std::vector<RationalVector> rows;
  for (std::size_t i = 0; i < m.rows(); ++i) rows.push_back(m.row(i));
  return vectors_string(rows);
}

RationalVector parse_rational_vector(const std::string& raw) {
  RationalVector v;
  for (const auto& item : parse_array(raw)) v.push_back(parse_rational(item));
  return v;
}

std::vector<RationalVector> parse_rational_vectors(const std::string& raw) {
  std::vector<RationalVector> out;
  for (const auto& item : parse_array(raw)) out.push_back(parse_rational_vector(item));
  return out;
}

Matrix parse_matrix(const std::string& raw) {
  auto rows = parse_array(raw);
  if (rows.empty()) throw DomainError("empty matrix");
  std::vector<std::vector<double>> values;
  for (const auto& r : rows) {
    values.emplace_back();
    for (const auto& item : parse_array(r)) values.back().push_back(parse_number(item));
  }
  Matrix m(values.size(), values.front().size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].size() != values.front().size()) throw DomainError("ragged matrix");
    for (std::size_t j = 0; j < values[i].size(); ++j) m(i, j) = values[i][j];
  }
  return m;
}

RationalMatrix parse_rational_matrix(const std::string& raw) { return RationalMatrix::from_rows(parse_rational_vectors(raw)); }

std::optional<Sl2Triple> find_sl2_triple(const LieAlgebra& g, const std::vector<RationalVector>& span) {
  auto basis = span_basis(span);
  const std::size_t k = basis.size(), m = g.dim();
  if (k < 3) return std::nullopt;
  std::vector<RationalMatrix> mats;
  for (const auto& b : basis) mats.push_back(g.element(b));
  RationalMatrix form(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) form(i, j) = (mats[i] * mats[j]).trace();

  auto complete = [&](const RationalVector& z) -> std::optional<Sl2Triple> {
    if (is_zero(z) || !is_nilpotent(g.element(z))) return std::nullopt;
    // [z, [z, f]] = −2z over f ∈ span.
    RationalMatrix adz = g.ad(z);
    RationalMatrix a(m, k);
    for (std::size_t j = 0; j < k; ++j) {
      RationalVector col = adz * (adz * basis[j]);
      for (std::size_t i = 0; i < m; ++i) a(i, j) = col[i];
    }
    auto sol = solve_exact(a, scale(z, Rational(-2)));
    if (!sol) return std::nullopt;
    RationalVector f = combination(basis, *sol);
    RationalVector h = g.bracket(z, f);
    auto lambda = multiple_of(add(g.bracket(h, f), scale(f, Rational(2))), z);
    if (!lambda) return std::nullopt;
    f = add(f, scale(z, -*lambda / 4));
    h = g.bracket(z, f);
    if (g.bracket(h, z) != scale(z, Rational(2)) || g.bracket(h, f) != scale(f, Rational(-2))) return std::nullopt;
    return Sl2Triple{z, h, f};
  };

  // Integral coefficients on all but the last basis vector; the last one is a
  // rational root of tr(z²) = 0, which every nilpotent satisfies.
  const std::size_t last = k - 1;
  for (long bound = 1; std::pow(2.0 * bound + 1, static_cast<double>(last)) <= 2e5; ++bound) {
    std::vector<long> c(last, -bound);
    while (true) {
      long top = 0;
      for (long v : c) top = std::max(top, std::abs(v));
      if (top == bound) {
        Rational qa = form(last, last), qb = 0, qc = 0;
        for (std::size_t i = 0; i < last; ++i) {
          qb += c[i] * form(i, last);
          for (std::size_t j = 0; j < last; ++j) qc += c[i] * c[j] * form(i, j);
        }
        std::vector<Rational> roots;
        if (qa == 0) {
          if (qb != 0) roots.push_back(-qc / (2 * qb));
          else if (qc == 0) roots.push_back(0);
        } else {
          Rational disc = qb * qb - qa * qc;
          if (disc >= 0 && mpz_perfect_square_p(disc.get_num_mpz_t()) && mpz_perfect_square_p(disc.get_den_mpz_t())) {
            Integer rn, rd;
            mpz_sqrt(rn.get_mpz_t(), disc.get_num_mpz_t());
            mpz_sqrt(rd.get_mpz_t(), disc.get_den_mpz_t());
            Rational root(rn, rd);
            root.canonicalize();
            roots.push_back((-qb + root) / qa);
            if (root != 0) roots.push_back((-qb - root) / qa);
          }
        }
        for (const auto& t : roots) {
          RationalVector coeff(k);
          for (std::size_t i = 0; i < last; ++i) coeff[i] = c[i];
          coeff[last] = t;
          if (auto triple = complete(combination(basis, coeff))) return triple;
        }
      }
      std::size_t i = 0;
      while (i < last && c[i] == bound) c[i++] = -bound;
      if (i == last) break;
      ++c[i];
    }
  }
  return std::nullopt;
}

Scenario scenario_so(const RationalMatrix& q, const std::vector<RationalVector>& L, long level, const Budgets& budgets,
                     std::uint64_t seed) {
  if (!q.square() || q != q.transpose()) throw DomainError("scenario_so: Q must be symmetric");
  const std::size_t d = q.rows();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(q.to_double());
  std::size_t p = 0, n = 0;
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
    double e = eig.eigenvalues()(i);
    if (std::abs(e) < 1e-12) throw DomainError("scenario_so: Q is degenerate");
    (e > 0 ? p : n)++;
  }
  if (p == 0 || n == 0) throw DomainError("scenario_so: Q must be indefinite");
  if (d < 4) throw DomainError("scenario_so: need p + q >= 4");
  if (level < 1) throw DomainError("scenario_so: level must be positive");
  auto Lb = span_basis(L);
  if (Lb.empty()) throw DomainError("scenario_so: L is zero");
  if (Lb.size() >= p || Lb.size() + 3 > d) throw DomainError("scenario_so: dim L too large for the signature");
  min_vector_proxy(Lb, &q);  // positive definiteness on L

  OrbitSpec o(Quotient::so(q));
  const LieAlgebra& alg = *o.quotient.algebra();
  o.level = level;
  o.g = Matrix::Identity(d, d);
  o.g_exact = RationalMatrix::identity(d);
  o.h_algebra = span_basis(pointwise_stabilizer(alg, Lb).algebra);
  o.L = Lb;
  auto triple = find_sl2_triple(alg, o.h_algebra);
  if (!triple) throw DomainError("scenario_so: no rational sl2-triple in the stabilizer");
  o.z = triple->z;
  o.directions = default_directions(alg, triple, o.h_algebra);
  o.label = "M_L L=" + vectors_string(Lb);
  Scenario sc(std::move(o));
  sc.budgets = budgets;
  sc.seed = seed;
  sc.name = "so";
  sc.battery = orbit_battery(sc, 4, 0.5);
  return sc;
}

Scenario scenario_sl2(const std::vector<RationalVector>& h_algebra, const Matrix& g, const Budgets& budgets,
                      std::uint64_t seed) {
  OrbitSpec o(Quotient::sl2());
  const LieAlgebra& alg = *o.quotient.algebra();
  if (g.rows() != 2 || g.cols() != 2 || std::abs(g.determinant() - 1) > 1e-9)
    throw DomainError("scenario_sl2: base point must lie in SL2(R)");
  o.h_algebra = span_basis(h_algebra);
  if (o.h_algebra.empty() || !alg.is_subalgebra(o.h_algebra)) throw DomainError("scenario_sl2: not a subalgebra");
  o.g = g;
  o.z = first_nilpotent(alg, o.h_algebra).value_or(RationalVector(alg.dim(), Rational(0)));
  o.directions = o.h_algebra;
  o.label = "sl2 h=" + vectors_string(o.h_algebra);
  Scenario sc(std::move(o));
  sc.budgets = budgets;
  sc.seed = seed;
  sc.name = "sl2";
  sc.battery = orbit_battery(sc, 4, 0.45);
  return sc;
}

Scenario with_transversal_offset(Scenario sc, double eps) {
  const LieAlgebra& alg = *sc.orbit.quotient.algebra();
  auto comp = orthogonal_complement(alg, sc.orbit.h_algebra);
  if (comp.empty()) throw DomainError("with_transversal_offset: H is the whole group");
  std::mt19937_64 rng(mix(sc.seed, 0x6f66667365749ull));
  std::normal_distribution<double> gauss;
  Vector y = Vector::Zero(alg.dim());
  for (const auto& c : comp) y += gauss(rng) * to_double(c);
  y /= alg.norm(y);
  sc.orbit.g = sc.orbit.g * expm(eps * alg.element(y));
  sc.orbit.g_exact.reset();
  sc.orbit.label += " offset=" + format_double(eps);
  sc.name += "-offset";
  rebuild_battery(sc);
  return sc;
}

Scenario planted_borel(Scenario sc, double eps) {
  const LieAlgebra& alg = *sc.orbit.quotient.algebra();
  auto triple = find_sl2_triple(alg, sc.orbit.h_algebra);
  if (!triple) throw DomainError("planted_borel: no sl2-triple in Lie(H)");
  sc.orbit.h_algebra = span_basis({triple->h, triple->z});
  sc.orbit.directions = {triple->z, triple->h};
  sc.orbit.z = triple->z;
  Vector f = to_double(triple->f);
  sc.orbit.g = sc.orbit.g * expm(eps / alg.norm(f) * alg.element(f));
  sc.orbit.g_exact.reset();
  sc.orbit.label += " borel f-offset=" + format_double(eps);
  sc.name += "-planted";
  rebuild_battery(sc);
  return sc;
}

Battery orbit_battery(const Scenario& sc, std::size_t count, double scale, int exponent) {
  Battery out;
  if (count == 0) return out;
  std::vector<Matrix> centers{sc.orbit.g};
  if (count > 1) {
    Scenario probe = sc;
    probe.seed = mix(sc.seed, 0x62617474ull);
    auto pts = sample_H_orbit(probe, count);
    for (std::size_t i = 1; i < pts.size(); ++i) centers.push_back(pts[i]);
  }
  for (const auto& c : centers) out.push_back(make_test_function(c, scale, exponent, 1));
  return out;
}

std::vector<Matrix> sample_H_orbit(const Scenario& sc, std::size_t count, std::vector<Matrix>* h_elements) {
  const auto& o = sc.orbit;
  const LieAlgebra& alg = *o.quotient.algebra();
  const std::size_t n = o.g.rows();
  std::vector<Matrix> out;
  if (h_elements) h_elements->clear();
  if (count == 0) return out;
  out.reserve(count);
  out.push_back(reduce_point(o.g));
  if (h_elements) h_elements->push_back(Matrix::Identity(n, n));
  if (count == 1) return out;
  if (o.directions.size() < 2) throw DomainError("sample_H_orbit: need two one-parameter directions");

  struct Letter {
    Matrix x;
    double norm;
    bool lattice;
  };
  std::vector<Letter> letters;
  for (const auto& d : o.directions) {
    RationalMatrix x = alg.element(d);
    bool lattice = false;
    if (is_nilpotent(x))
      for (long k = 1; k <= 12 && !lattice; ++k)
        if (integral_matrix(exp_nilpotent(x * Rational(k)))) {
          x = x * Rational(k);
          lattice = true;
        }
    letters.push_back({x.to_double(), norm(x), lattice});
  }
  const auto& b = sc.budgets;
  std::mt19937_64 rng(mix(sc.seed, 0x73616d706c65ull));
  std::uniform_int_distribution<std::size_t> length(1, std::max<std::size_t>(1, b.word_length));
  std::uniform_int_distribution<std::size_t> pick(0, letters.size() - 1);
  std::uniform_int_distribution<int> step(-b.lattice_step, b.lattice_step);
  std::uniform_real_distribution<double> unit(-1, 1);
  for (std::size_t i = 1; i < count; ++i) {
    Matrix h = Matrix::Identity(n, n);
    const std::size_t len = length(rng);
    for (std::size_t w = 0; w < len; ++w) {
      const Letter& l = letters[pick(rng)];
      double t = l.lattice ? step(rng) + b.jitter * unit(rng) / l.norm : unit(rng) / l.norm;
      h = h * expm(t * l.x);
    }
    out.push_back(reduce_point(o.g * h));
    if (h_elements) h_elements->push_back(h);
  }
  return out;
}

std::vector<RationalVector> numeric_lie_closure(const LieAlgebra& g, const std::vector<RationalVector>& s,
                                                const Vector& Z, double tol, bool* exact) {
  const std::size_t m = g.dim();
  std::vector<Vector> frame;
  auto absorb = [&](Vector v) {
    const double n0 = g.norm(v);
    if (n0 == 0 || frame.size() == m) return false;
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& f : frame) v -= g.inner(f, v) * f;
    const double n1 = g.norm(v);
    if (n1 <= tol * n0) return false;
    frame.push_back(v / n1);
    return true;
  };
  for (const auto& v : s) absorb(to_double(v));
  absorb(Z);
  for (bool grew = true; grew && frame.size() < m;) {
    grew = false;
    for (std::size_t i = 0; i < frame.size() && !grew; ++i)
      for (std::size_t j = 0; j < i && !grew; ++j) grew = absorb(g.bracket(frame[i], frame[j]));
  }
  const std::size_t k = frame.size();
  bool ok = true;
  std::vector<RationalVector> out;
  if (k == m) {
    for (std::size_t i = 0; i < m; ++i) {
      RationalVector e(m, Rational(0));
      e[i] = 1;
      out.push_back(e);
    }
  } else {
    // Reduced row echelon form of the frame, then small-denominator rationalization.
    Matrix a(k, m);
    for (std::size_t i = 0; i < k; ++i) a.row(i) = frame[i].transpose();
    std::size_t row = 0;
    for (std::size_t col = 0; col < m && row < k; ++col) {
      Eigen::Index best;
      double piv = a.col(col).segment(row, k - row).cwiseAbs().maxCoeff(&best);
      if (piv < 1e-8) continue;
      a.row(row).swap(a.row(row + best));
      a.row(row) /= a(row, col);
      for (std::size_t r = 0; r < k; ++r)
        if (r != row) a.row(r) -= a(r, col) * a.row(row);
      ++row;
    }
    if (row < k) ok = false;
    for (std::size_t i = 0; i < row; ++i) {
      RationalVector v(m);
      for (std::size_t j = 0; j < m; ++j) {
        v[j] = rationalize(a(i, j), 1000);
        if (std::abs(to_double(v[j]) - a(i, j)) > 1e-6) ok = false;
      }
      out.push_back(v);
    }
    out = span_basis(out);
    if (out.size() != k || !g.is_subalgebra(out)) ok = false;
    for (const auto& v : s)
      if (ok && !in_span(out, v)) ok = false;
  }
  if (exact) *exact = ok;
  return out;
}

std::vector<std::size_t> ChainReport::dims() const {
  std::vector<std::size_t> out;
  for (const auto& s : steps) out.push_back(s.dim);
  return out;
}

std::string ChainReport::summary() const {
  std::ostringstream os;
  os << "dims";
  for (auto d : dims()) os << ' ' << d;
  os << "\ndim_g " << dim_g << "\nreached_full " << (reached_full ? "true" : "false") << "\nstop " << stop << '\n';
  return os.str();
}

std::string ChainReport::records() const {
  std::string out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& s = steps[i];
    json r{{"kind", "chain_step"}, {"step", i},           {"dim", s.dim},
           {"eps_hat", s.eps_hat}, {"eps_found", s.eps_found}, {"pair_norm", s.pair_norm},
           {"diagnostic", s.diagnostic}, {"basis", vectors_string(s.basis)}};
    if (s.direction.size()) r["direction"] = std::vector<double>(s.direction.data(), s.direction.data() + s.direction.size());
    out += r.dump() + "\n";
  }
  out += json{{"kind", "chain"}, {"dims", dims()}, {"dim_g", dim_g}, {"reached_full", reached_full}, {"stop", stop}}
             .dump() +
         "\n";
  return out;
}

ChainReport accumulate_invariance(const Scenario& sc) {
  const Quotient& x = sc.orbit.quotient;
  const LieAlgebra& alg = *x.algebra();
  const auto& b = sc.budgets;
  const auto& ledger = sc.ledger;
  ChainReport rep;
  rep.dim_g = alg.dim();

  auto points = sample_H_orbit(sc, b.samples);
  std::vector<WeightedPoint> sample;
  for (std::size_t i = 0; i < std::min(b.invariance_samples, points.size()); ++i) sample.push_back({points[i], 1.0});
  Battery battery = sc.battery.empty() ? orbit_battery(sc, 4, 0.5) : sc.battery;
  std::vector<double> sobolev(battery.size());
  for (std::size_t i = 0; i < battery.size(); ++i)
    sobolev[i] = sobolev_surrogate(x, battery[i], 1, {400, mix(sc.seed, i), 0.01});
  auto eps_under = [&](const std::vector<RationalVector>& span) {
    Matrix frame = orthonormal_frame(alg, span);
    double worst = 0;
    for (Eigen::Index c = 0; c < frame.cols(); ++c)
      worst = std::max(worst, almost_invariance(alg, sample, frame.col(c), battery, sobolev));
    return worst;
  };

  const double eta0 = ledger.get("eta0");
  auto reflag = [&](const Matrix& p) { return x.height(p) <= 1 / eta0; };
  const std::size_t anchor = pigeonhole_anchor(points, b.box_radius, b.anchors);

  auto s = span_basis(sc.orbit.h_algebra);
  for (std::size_t iter = 0; iter <= alg.dim(); ++iter) {
    ChainStep st;
    st.dim = s.size();
    st.basis = s;
    st.eps_hat = eps_under(s);
    if (s.size() == alg.dim()) {
      st.diagnostic = "full";
      rep.steps.push_back(st);
      rep.reached_full = true;
      rep.stop = "reached dim g";
      break;
    }
    std::vector<RationalVector> r;
    try {
      r = invariant_complement(alg, s, sc.orbit.h_algebra).basis;
    } catch (const DomainError&) {
      r = orthogonal_complement(alg, s);
    }
    auto dec = std::make_shared<Decomposition>(x.algebra(), s, r);
    BoxCover cover(x, points[anchor], dec, b.T, default_box_exponent(ledger, alg.dim()), b.box_radius, b.box_radius,
                   1 / eta0);
    auto found = transversal_pair_search(points, {}, cover, b.T, ledger, reflag);
    if (!found.pair) {
      st.diagnostic = found.diagnostic;
      rep.steps.push_back(st);
      rep.stop = "NotFound";
      break;
    }
    st.direction = found.pair->r;
    st.pair_norm = found.pair->norm;
    st.eps_found = almost_invariance(alg, sample, found.pair->r / alg.norm(found.pair->r), battery, sobolev);
    bool exact = false;
    auto grown = numeric_lie_closure(alg, s, found.pair->r, 1e-6, &exact);
    if (!exact || grown.size() <= s.size()) {
      st.diagnostic = exact ? "closure did not grow" : "closure not rational";
      rep.steps.push_back(st);
      rep.stop = st.diagnostic;
      break;
    }
    st.diagnostic = "pair found";
    rep.steps.push_back(st);
    s = grown;
  }
  return rep;
}

// ---- scenario persistence ----

ConfigDoc Scenario::to_config() const {
  ConfigDoc doc;
  const auto& o = orbit;
  auto& sc = doc["scenario"];
  sc["name"] = name;
  sc["seed"] = std::to_string(seed);
  auto& q = doc["quotient"];
  switch (o.quotient.kind()) {
    case QuotientKind::SL2Z: q["kind"] = "sl2"; break;
    case QuotientKind::SLNZ:
      q["kind"] = "sl";
      q["n"] = std::to_string(o.quotient.matrix_size());
      break;
    case QuotientKind::SOQZ:
      q["kind"] = "so";
      q["form"] = rational_matrix_string(*o.quotient.form());
      break;
  }
  q["level"] = std::to_string(o.level);
  auto& ob = doc["orbit"];
  ob["g"] = matrix_string(o.g);
  if (o.g_exact) ob["g_exact"] = rational_matrix_string(*o.g_exact);
  ob["h_algebra"] = vectors_string(o.h_algebra);
  ob["L"] = vectors_string(o.L);
  ob["directions"] = vectors_string(o.directions);
  ob["z"] = vector_string(o.z);
  ob["label"] = o.label;
  auto& bu = doc["budgets"];
  bu["T"] = format_double(budgets.T);
  bu["samples"] = std::to_string(budgets.samples);
  bu["invariance_samples"] = std::to_string(budgets.invariance_samples);
  bu["step"] = format_double(budgets.step);
  bu["word_length"] = std::to_string(budgets.word_length);
  bu["lattice_step"] = std::to_string(budgets.lattice_step);
  bu["jitter"] = format_double(budgets.jitter);
  bu["box_radius"] = format_double(budgets.box_radius);
  bu["anchors"] = std::to_string(budgets.anchors);
  auto& ba = doc["battery"];
  ba["count"] = std::to_string(battery.size());
  for (std::size_t i = 0; i < battery.size(); ++i) {
    const auto& f = battery[i];
    const std::string k = std::to_string(i);
    ba["center_" + k] = matrix_string(f.center);
    ba["scale_" + k] = format_double(f.scale);
    ba["exponent_" + k] = std::to_string(f.exponent);
    ba["weight_" + k] = std::to_string(f.weight_degree);
  }
  auto& le = doc["ledger"];
  for (const auto& [k, v] : ledger.values())
    if (k != "K" || ledger.K_overridden()) le[k] = format_double(v);
  return doc;
}

Budgets parse_budgets(const ConfigDoc& doc, Budgets base) {
  auto num = [&](const char* key, auto& field) {
    if (auto v = maybe(doc, "budgets", key)) {
      using F = std::decay_t<decltype(field)>;
      if constexpr (std::is_floating_point_v<F>) field = parse_number(*v);
      else field = static_cast<F>(parse_integer(*v));
    }
  };
  num("T", base.T);
  num("samples", base.samples);
  num("invariance_samples", base.invariance_samples);
  num("step", base.step);
  num("word_length", base.word_length);
  num("lattice_step", base.lattice_step);
  num("jitter", base.jitter);
  num("box_radius", base.box_radius);
  num("anchors", base.anchors);
  if (base.T <= 1 || base.step <= 0 || base.box_radius <= 0 || base.word_length == 0)
    throw DomainError("config: budgets out of range");
  return base;
}

Scenario Scenario::from_config(const ConfigDoc& doc) {
  const std::string kind = need(doc, "quotient", "kind");
  std::optional<Quotient> q;
  if (kind == "sl2") q = Quotient::sl2();
  else if (kind == "sl") q = Quotient::sl(static_cast<std::size_t>(parse_integer(need(doc, "quotient", "n"))));
  else if (kind == "so") q = Quotient::so(parse_rational_matrix(need(doc, "quotient", "form")));
  else throw DomainError("config: unknown quotient kind " + kind);
  OrbitSpec o(*q);
  if (auto lv = maybe(doc, "quotient", "level")) o.level = parse_integer(*lv);
  o.g = parse_matrix(need(doc, "orbit", "g"));
  if (o.g.rows() != static_cast<Eigen::Index>(o.quotient.matrix_size()) || o.g.cols() != o.g.rows())
    throw DomainError("config: base point has the wrong size");
  if (auto ge = maybe(doc, "orbit", "g_exact")) o.g_exact = parse_rational_matrix(*ge);
  o.h_algebra = parse_rational_vectors(need(doc, "orbit", "h_algebra"));
  if (auto l = maybe(doc, "orbit", "L")) o.L = parse_rational_vectors(*l);
  if (auto d = maybe(doc, "orbit", "directions")) o.directions = parse_rational_vectors(*d);
  else o.directions = o.h_algebra;
  if (auto z = maybe(doc, "orbit", "z")) o.z = parse_rational_vector(*z);
  if (auto l = maybe(doc, "orbit", "label")) o.label = *l;
  const auto m = o.quotient.algebra()->dim();
  auto check_dim = [&](const std::vector<RationalVector>& vs) {
    for (const auto& v : vs)
      if (v.size() != m) throw DomainError("config: algebra vector of the wrong length");
  };
  check_dim(o.h_algebra);
  check_dim(o.directions);
  if (!o.z.empty()) check_dim({o.z});
  if (!o.quotient.algebra()->is_subalgebra(span_basis(o.h_algebra))) throw DomainError("config: h_algebra not closed");

  Scenario sc(std::move(o));
  if (auto s = maybe(doc, "scenario", "seed")) sc.seed = std::stoull(*s);
  if (auto s = maybe(doc, "scenario", "name")) sc.name = *s;
  sc.budgets = parse_budgets(doc);
  if (auto c = maybe(doc, "battery", "count")) {
    const long count = parse_integer(*c);
    for (long i = 0; i < count; ++i) {
      const std::string k = std::to_string(i);
      sc.battery.push_back(make_test_function(parse_matrix(need(doc, "battery", "center_" + k)),
                                              parse_number(need(doc, "battery", "scale_" + k)),
                                              static_cast<int>(parse_integer(need(doc, "battery", "exponent_" + k))),
                                              static_cast<int>(parse_integer(need(doc, "battery", "weight_" + k)))));
    }
  }
  if (auto le = doc.find("ledger"); le != doc.end())
    for (const auto& [k, v] : le->second) sc.ledger.set(k, parse_number(v));
  return sc;
}

// ---- statistics ----

namespace {

std::vector<double> ranks(const std::vector<double>& a) {
  std::vector<std::size_t> idx(a.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return a[i] < a[j]; });
  std::vector<double> r(a.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && a[idx[j + 1]] == a[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw DomainError("spearman: need two equal-length samples");
  auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n, mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0 || sbb == 0) return 0;
  return sab / std::sqrt(saa * sbb);
}

PowerFit power_law_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 3) throw DomainError("power_law_fit: need at least three points");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] <= 0 || y[i] <= 0) throw DomainError("power_law_fit: values must be positive");
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  const double n = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n, my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (sxx == 0) throw DomainError("power_law_fit: x values coincide");
  PowerFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double e = ly[i] - fit.intercept - fit.slope * lx[i];
    rss += e * e;
  }
  const double se = std::sqrt(rss / (n - 2) / sxx);
  const double t = boost::math::quantile(boost::math::students_t(n - 2), 0.975);
  fit.low = fit.slope - t * se;
  fit.high = fit.slope + t * se;
  return fit;
}

std::string RateReport::csv() const {
  std::string out = "orbit_id,proxy,theta,mean_abs_disc,stderr\n";
  for (const auto& r : rows)
    out += std::to_string(r.orbit_id) + "," + format_double(r.proxy) + "," + format_double(r.theta) + "," +
           format_double(r.mean_abs_disc) + "," + format_double(r.stderr_) + "\n";
  return out;
}

std::string RateReport::records() const {
  std::string out;
  for (const auto& r : rows)
    out += json{{"kind", "rate_row"},          {"orbit_id", r.orbit_id}, {"label", r.label},
                {"proxy", r.proxy},            {"theta", r.theta},       {"mean_abs_disc", r.mean_abs_disc},
                {"stderr", r.stderr_}}
               .dump() +
           "\n";
  json fit{{"kind", "rate_fit"}, {"spearman", spearman}, {"method", method}};
  if (slope) {
    fit["slope"] = *slope;
    fit["slope_low"] = *slope_low;
    fit["slope_high"] = *slope_high;
  }
  return out + fit.dump() + "\n";
}

// ---- split form ----

Matrix split_form_embedding(const Matrix& a, const Matrix& b) {
  if (a.rows() != 2 || a.cols() != 2 || b.rows() != 2 || b.cols() != 2)
    throw DomainError("split_form_embedding: 2x2 inputs expected");
  auto phi = [](const Vector& x) {
    Matrix m(2, 2);
    m << x(0) + x(2), x(1) + x(3), x(3) - x(1), x(0) - x(2);
    return m;
  };
  Matrix out(4, 4);
  for (int i = 0; i < 4; ++i) {
    Matrix m = a * phi(Vector::Unit(4, i)) * b.transpose();
    out.col(i) << (m(0, 0) + m(1, 1)) / 2, (m(0, 1) - m(1, 0)) / 2, (m(0, 0) - m(1, 1)) / 2, (m(0, 1) + m(1, 0)) / 2;
  }
  return out;
}

RationalMatrix split_form_embedding(const RationalMatrix& a, const RationalMatrix& b) {
  if (a.rows() != 2 || a.cols() != 2 || b.rows() != 2 || b.cols() != 2)
    throw DomainError("split_form_embedding: 2x2 inputs expected");
  RationalMatrix out(4, 4);
  const Rational half(1, 2);
  for (std::size_t i = 0; i < 4; ++i) {
    RationalVector x(4, Rational(0));
    x[i] = 1;
    RationalMatrix phi{{x[0] + x[2], x[1] + x[3]}, {x[3] - x[1], x[0] - x[2]}};
    RationalMatrix m = a * phi * b.transpose();
    out(0, i) = (m(0, 0) + m(1, 1)) * half;
    out(1, i) = (m(0, 1) - m(1, 0)) * half;
    out(2, i) = (m(0, 0) - m(1, 1)) * half;
    out(3, i) = (m(0, 1) + m(1, 0)) * half;
  }
  return out;
}

bool is_split_form(const RationalMatrix& q) {
  return q == RationalMatrix::diagonal({Rational(1), Rational(1), Rational(-1), Rational(-1)});
}

RationalMatrix hecke_twist(const RationalVector& v) {
  if (v.size() != 4) throw DomainError("hecke_twist: vector in Q^4 expected");
  RationalMatrix m{{v[0] + v[2], v[1] + v[3]}, {v[3] - v[1], v[0] - v[2]}};
  if (determinant(m) <= 0) throw DomainError("hecke_twist: Q(v) must be positive");
  RationalMatrix j{{0, 1}, {-1, 0}};
  RationalMatrix c = m.transpose() * j;
  auto flat = primitive_integral(c.flat());
  RationalMatrix out{{flat[0], flat[1]}, {flat[2], flat[3]}};
  return out;
}

std::vector<RationalMatrix> hecke_representatives(long n) {
  if (n < 1) throw DomainError("hecke_representatives: n must be positive");
  std::vector<RationalMatrix> out;
  for (long a = 1; a <= n; ++a) {
    if (n % a) continue;
    const long d = n / a;
    for (long b = 0; b < d; ++b)
      if (std::gcd(std::gcd(a, b), d) == 1) out.push_back(RationalMatrix{{a, b}, {0, d}});
  }
  return out;
}

EquidistributionOptions default_equidistribution_options(std::uint64_t seed, std::size_t per_factor) {
  EquidistributionOptions opt;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-0.5, 0.5), uy(1.0, 1.12), ut(0, M_PI);
  for (auto* battery : {&opt.first, &opt.second})
    for (std::size_t i = 0; i < per_factor; ++i) {
      const double x = ux(rng), y = uy(rng), t = ut(rng);
      battery->push_back(make_test_function(sl2_point(x, y, t), 0.45, 4));
    }
  return opt;
}

namespace {

struct RowStats {
  double mean_abs = 0, stderr_ = 0;
};

// Product bumps f ⊗ f′ on the closed orbit of the stabilizer of v. The fiber of the orbit over
// SL₂(ℤ)a in the first factor is {SL₂(ℤ)·h·a·C⁻¹} over the Hecke representatives h.
RowStats hecke_row(const RationalVector& v, const EquidistributionOptions& opt, std::uint64_t seed) {
  const RationalMatrix c = hecke_twist(v);
  const long n = static_cast<long>(to_double(determinant(c)));
  std::vector<Matrix> reps;
  for (const auto& h : hecke_representatives(n)) reps.push_back(h.to_double());
  const Matrix cinv = c.to_double().inverse();
  const Quotient x = Quotient::sl2();
  const std::size_t n1 = opt.first.size(), n2 = opt.second.size();
  std::vector<double> ref1(n1), ref2(n2);
  for (std::size_t i = 0; i < n1; ++i) ref1[i] = reference_sl2(x, opt.first[i]).value;
  for (std::size_t j = 0; j < n2; ++j) ref2[j] = reference_sl2(x, opt.second[j]).value;

  std::vector<double> sum(n1 * n2, 0), sum2(n1 * n2, 0);
  std::vector<double> v1(n1), v2(n2);
  std::mt19937_64 rng(seed);
  for (std::size_t s = 0; s < opt.samples; ++s) {
    Matrix a = sample_haar_sl2(rng);
    bool any = false;
    for (std::size_t i = 0; i < n1; ++i) any |= (v1[i] = evaluate(opt.first[i], a)) != 0;
    if (!any) continue;
    std::fill(v2.begin(), v2.end(), 0.0);
    for (const auto& h : reps) {
      Matrix p = reduce_point(Matrix(h * a * cinv));
      for (std::size_t j = 0; j < n2; ++j) v2[j] += evaluate(opt.second[j], p);
    }
    for (std::size_t i = 0; i < n1; ++i) {
      if (v1[i] == 0) continue;
      for (std::size_t j = 0; j < n2; ++j) {
        const double w = v1[i] * v2[j] / static_cast<double>(reps.size());
        sum[i * n2 + j] += w;
        sum2[i * n2 + j] += w * w;
      }
    }
  }
  RowStats out;
  const double N = static_cast<double>(opt.samples);
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j) {
      const double mean = sum[i * n2 + j] / N;
      const double var = std::max(0.0, sum2[i * n2 + j] / N - mean * mean);
      out.mean_abs += std::abs(mean - ref1[i] * ref2[j]);
      out.stderr_ += std::sqrt(var / N);
    }
  out.mean_abs /= static_cast<double>(n1 * n2);
  out.stderr_ /= static_cast<double>(n1 * n2);
  return out;
}

// Orbit samples against random-walk references of the template battery.
RowStats walk_row(const Scenario& sc, const EquidistributionOptions& opt) {
  const Quotient& x = sc.orbit.quotient;
  auto pts = sample_H_orbit(sc, sc.budgets.samples);
  auto refs = reference_mixing(x, sc.battery, sc.orbit.g, opt.walk_reference_steps, opt.walk_reference_steps / 10, 0.5,
                               mix(sc.seed, 0x72656675ull));
  RowStats out;
  for (std::size_t j = 0; j < sc.battery.size(); ++j) {
    double s = 0, s2 = 0;
    for (const auto& p : pts) {
      const double v = evaluate(sc.battery[j], p);
      s += v;
      s2 += v * v;
    }
    const double N = static_cast<double>(pts.size());
    const double mean = s / N;
    out.mean_abs += std::abs(mean - refs[j].value);
    out.stderr_ += std::sqrt(std::max(0.0, s2 / N - mean * mean) / N) + refs[j].error;
  }
  out.mean_abs /= static_cast<double>(sc.battery.size());
  out.stderr_ /= static_cast<double>(sc.battery.size());
  return out;
}

}  // namespace

RateReport equidistribution_experiment(const std::vector<std::vector<RationalVector>>& family, const Scenario& templ,
                                       const EquidistributionOptions& opt) {
  const auto& form = templ.orbit.quotient.form();
  if (!form) throw DomainError("equidistribution_experiment: template must be an SO_Q quotient");
  const RationalMatrix q = *form;
  std::vector<double> proxies;
  for (const auto& L : family) proxies.push_back(min_vector_proxy(L, &q));
  {
    auto distinct = proxies;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 4) throw DomainError("equidistribution_experiment: need four distinct proxies");
  }
  const bool split = is_split_form(q) && std::all_of(family.begin(), family.end(), [](const auto& L) {
                       return span_basis(L).size() == 1;
                     });
  if (split && (opt.first.empty() || opt.second.empty()))
    throw DomainError("equidistribution_experiment: empty product battery");

  RateReport rep;
  rep.method = split ? "split-form product bumps, exact reference" : "orbit walk, random-walk reference";
  rep.rows.resize(family.size());
  parallel_for(family.size(), [&](std::size_t k) {
    const auto Lb = span_basis(family[k]);
    Scenario sc = scenario_so(q, Lb, templ.orbit.level, templ.budgets, templ.seed);
    if (!templ.battery.empty()) sc.battery = templ.battery;
    sc.ledger = templ.ledger;
    RateRow& row = rep.rows[k];
    row.orbit_id = k;
    row.label = vectors_string(Lb);
    row.proxy = proxies[k];
    const RationalVector v = primitive_integral(Lb.front());
    auto members = enumerate_stabilizers(sc.orbit.quotient.algebra(), q, std::sqrt(to_double(v[0] * v[0] + v[1] * v[1] +
                                                                                          v[2] * v[2] + v[3] * v[3])) +
                                                                            1e-9,
                                         Lb);
    row.theta = Lb.size() == 1 ? theta(sc.orbit.h_algebra, RationalMatrix::identity(q.rows()), members).value
                               : std::numeric_limits<double>::infinity();
    RowStats st = split ? hecke_row(v, opt, templ.seed) : walk_row(sc, opt);
    row.mean_abs_disc = st.mean_abs;
    row.stderr_ = st.stderr_;
  });
  std::stable_sort(rep.rows.begin(), rep.rows.end(), [](const RateRow& a, const RateRow& b) { return a.proxy < b.proxy; });
  std::vector<double> px, dy;
  for (const auto& r : rep.rows) {
    px.push_back(r.proxy);
    dy.push_back(r.mean_abs_disc);
  }
  rep.spearman = spearman(px, dy);
  if (rep.rows.size() >= 4 && std::all_of(dy.begin(), dy.end(), [](double d) { return d > 0; })) {
    PowerFit fit = power_law_fit(px, dy);
    rep.slope = fit.slope;
    rep.slope_low = fit.low;
    rep.slope_high = fit.high;
  }
  return rep;
}

// ---- closing lemma ----

std::string DichotomyReport::records() const {
  std::string out;
  for (const auto& r : rows) {
    json j{{"kind", "dichotomy_row"}, {"point", r.point},       {"s", r.s_label},       {"T", r.T},
           {"fired", r.fired},        {"measure", r.measure},   {"threshold", r.threshold},
           {"intermediate", r.intermediate}, {"diophantine", r.diophantine}, {"error", r.error}};
    j["theta"] = std::isfinite(r.theta) ? json(r.theta) : json("inf");
    out += j.dump() + "\n";
  }
  return out;
}

ThetaResult numeric_theta(const LieAlgebra& g, const std::vector<RationalVector>& h_algebra, const Matrix& point,
                          const SubgroupFamily& family, double tol) {
  ThetaResult out;
  const Matrix ad = g.adjoint_matrix(point);
  std::vector<Vector> moved;
  for (const auto& h : h_algebra) moved.push_back(ad * to_double(h));
  for (std::size_t i = 0; i < family.size(); ++i) {
    const auto& m = family.members[i];
    auto basis = span_basis(m.subgroup.algebra);
    Matrix b(g.dim(), basis.size());
    for (std::size_t j = 0; j < basis.size(); ++j) b.col(j) = to_double(basis[j]);
    auto qr = b.colPivHouseholderQr();
    bool inside = true;
    for (const auto& v : moved) {
      Vector res = b * qr.solve(v) - v;
      if (res.norm() > tol * std::max(1.0, v.norm())) inside = false;
    }
    if (!inside) continue;
    OrbitMapEvaluator ev(g, m.wedge.degree(), point, Vector::Zero(g.dim()));
    const double d = ev.norm(ev.orbit(m.wedge.dense()));
    if (d < out.value) {
      out.value = d;
      out.member = i;
    }
  }
  return out;
}

DichotomyReport closing_lemma_experiment(const Scenario& sc,
                                         const std::vector<std::pair<std::string, std::vector<RationalVector>>>& s_choices,
                                         const std::vector<double>& T_grid,
                                         const std::vector<std::pair<std::string, Matrix>>& base_points,
                                         const SubgroupFamily& family, double eta) {
  const Quotient& x = sc.orbit.quotient;
  const LieAlgebra& alg = *x.algebra();
  if (is_zero(sc.orbit.z)) throw DomainError("closing_lemma_experiment: scenario has no unipotent direction");
  const NilpotentDirection u(x.algebra(), sc.orbit.z);
  const Vector z = to_double(sc.orbit.z);
  DichotomyReport rep;
  NearReturnOptions opt;
  opt.step = sc.budgets.step;
  opt.anchors = sc.budgets.anchors;
  for (const auto& [pname, g] : base_points) {
    const ThetaResult th = numeric_theta(alg, {sc.orbit.z}, g, family);
    for (const auto& [sname, s] : s_choices) {
      for (double T : T_grid) {
        DichotomyRow row;
        row.point = pname;
        row.s_label = sname;
        row.T = T;
        row.theta = th.value;
        if (th.member) row.intermediate = family.members[*th.member].subgroup.label;
        try {
          auto sb = span_basis(s);
          if (!alg.is_subalgebra(sb)) throw DomainError("s is not a subalgebra");
          if (alg.is_ideal(sb)) throw DomainError("s is an ideal");
          row.diophantine = is_diophantine(g, z, eta, T, family, sc.ledger).verdict;
          auto det = near_return_detector(x, g, u, sb, T, sc.ledger, opt);
          row.fired = det.fired;
          row.measure = det.measure;
          row.threshold = det.threshold;
        } catch (const DomainError& e) {
          row.error = e.what();
        }
        rep.rows.push_back(row);
      }
    }
  }
  return rep;
}

}  // namespace orbitlab
