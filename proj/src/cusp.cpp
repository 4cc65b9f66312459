#include "orbitlab/cusp.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "orbitlab/errors.hpp"

namespace orbitlab {

RationalMatrix LatticeBasis::gram(const LieAlgebra& g) const {
  const std::size_t m = vectors.size();
  RationalMatrix out(m, m);
  RationalVector gv;
  for (std::size_t j = 0; j < m; ++j) {
    gv = g.gram() * vectors[j];
    for (std::size_t i = 0; i <= j; ++i) {
      Rational s = 0;
      for (std::size_t k = 0; k < gv.size(); ++k) s += vectors[i][k] * gv[k];
      out(i, j) = s;
      out(j, i) = s;
    }
  }
  return out;
}

LatticeBasis adjoint_lattice(const LieAlgebra& g, const RationalMatrix& group_element) {
  RationalMatrix a = g.adjoint_matrix(inverse(group_element));
  LatticeBasis b;
  for (std::size_t j = 0; j < g.dim(); ++j) b.vectors.push_back(a.col(j));
  return b;
}

namespace {

HeightReport finish(const ShortVectorSearch& s, const Matrix& basis_cols) {
  HeightReport r;
  r.coefficients = s.coefficients;
  r.shortest_vector = basis_cols * to_double(s.coefficients);
  r.certified = s.certified;
  r.nodes = s.nodes;
  r.height = 1.0 / std::sqrt(s.norm_sq);
  r.height_lower = 1.0 / std::sqrt(s.upper_sq);
  r.height_upper = 1.0 / std::sqrt(s.lower_sq);
  return r;
}

}  // namespace

HeightReport height_in_cusp(const LieAlgebra& g, const RationalMatrix& group_element, std::size_t node_budget) {
  LatticeBasis basis = adjoint_lattice(g, group_element);
  ShortVectorSearch s = shortest_vector(basis.gram(g), node_budget);
  Matrix cols(g.dim(), g.dim());
  for (std::size_t j = 0; j < g.dim(); ++j) cols.col(j) = to_double(basis.vectors[j]);
  HeightReport r = finish(s, cols);
  RationalVector exact(g.dim(), Rational(0));
  for (std::size_t j = 0; j < g.dim(); ++j)
    if (sgn(s.coefficients[j]) != 0)
      for (std::size_t k = 0; k < g.dim(); ++k) exact[k] += s.coefficients[j] * basis.vectors[j][k];
  r.shortest_exact = exact;
  return r;
}

HeightReport height_in_cusp(const LieAlgebra& g, const Matrix& group_element, std::size_t node_budget) {
  Eigen::FullPivLU<Matrix> lu(group_element);
  if (!lu.isInvertible()) throw DomainError("height_in_cusp: singular group element");
  Matrix cols = g.adjoint_matrix(Matrix(lu.inverse()));
  Eigen::LLT<Matrix> llt(g.gram_double());
  Matrix frame = llt.matrixU();
  return finish(shortest_vector_basis(frame * cols, node_budget), cols);
}

bool in_compact_part(const HeightReport& report, double eta) {
  if (!(eta > 0 && eta < 1)) throw DomainError("in_compact_part: eta must lie in (0,1)");
  const double bound = 1.0 / eta;
  if (report.certified) return report.height <= bound;
  if (report.height_upper <= bound) return true;
  if (report.height_lower > bound) return false;
  throw DomainError("in_compact_part: uncertified height report straddles the threshold");
}

double minht_estimate(const LieAlgebra& g, const std::vector<Matrix>& orbit_samples) {
  if (orbit_samples.empty()) throw DomainError("minht_estimate: empty sample");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& x : orbit_samples) best = std::min(best, height_in_cusp(g, x).height);
  return best;
}

Reduction reduce_rows(const Matrix& g) {
  const std::size_t n = g.rows();
  Reduction r;
  r.size_before = operator_size(g);
  Matrix cols = g.transpose();
  Matrix t;
  lll_basis(cols, &t);
  if (t.determinant() < 0) t.row(0) *= -1;
  r.gamma = t;
  r.representative = t * g;
  r.size_after = operator_size(r.representative);
  r.exact_reduction = true;
  (void)n;
  return r;
}

Reduction reduce_sl2(const Matrix& g) {
  if (g.rows() != 2 || g.cols() != 2) throw DomainError("reduce_sl2 needs a 2x2 matrix");
  Reduction r;
  r.size_before = operator_size(g);
  Eigen::Matrix2d gamma = Eigen::Matrix2d::Identity();
  Eigen::Matrix2d b = g;
  for (int iter = 0; iter < 10000; ++iter) {
    double n0 = b.row(0).squaredNorm(), n1 = b.row(1).squaredNorm();
    if (n1 < n0) {
      // (b0, b1) -> (b1, -b0) keeps determinant one.
      Eigen::Matrix2d s;
      s << 0, 1, -1, 0;
      b = s * b;
      gamma = s * gamma;
      continue;
    }
    double q = std::round(b.row(0).dot(b.row(1)) / n0);
    if (q == 0) break;
    b.row(1) -= q * b.row(0);
    gamma.row(1) -= q * gamma.row(0);
  }
  r.gamma = gamma;
  r.representative = b;
  r.size_after = operator_size(r.representative);
  r.exact_reduction = true;
  return r;
}

Quotient::Quotient(QuotientKind kind, AlgebraPtr algebra, std::optional<RationalMatrix> form)
    : kind_(kind), algebra_(std::move(algebra)), form_(std::move(form)) {
  if (kind_ != QuotientKind::SOQZ) return;
  const RationalMatrix& q = *form_;
  const std::size_t n = q.rows();
  Matrix qd = q.to_double();
  // Integral reflections s_v for short v with Q(v) ∈ {±1, ±2}.
  std::vector<Matrix> reflections;
  std::vector<int> v(n, -1);
  while (true) {
    RationalVector rv(n);
    for (std::size_t i = 0; i < n; ++i) rv[i] = v[i];
    bool canonical = false;
    for (std::size_t i = 0; i < n; ++i)
      if (v[i] != 0) {
        canonical = v[i] > 0;
        break;
      }
    if (canonical) {
      Rational qv = quadratic_value(q, rv);
      if (abs(qv) == 1 || abs(qv) == 2) {
        RationalVector w = q * rv;
        RationalMatrix s = RationalMatrix::identity(n);
        bool integral = true;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            s(i, j) -= Rational(2) * rv[i] * w[j] / qv;
            if (s(i, j).get_den() != 1) integral = false;
          }
        if (integral) reflections.push_back(s.to_double());
      }
    }
    std::size_t i = 0;
    while (i < n && v[i] == 1) v[i++] = -1;
    if (i == n) break;
    ++v[i];
  }
  std::set<std::vector<long long>> seen;
  for (const auto& a : reflections)
    for (const auto& b : reflections) {
      Matrix p = a * b;
      if ((p - Matrix::Identity(n, n)).norm() < 0.5) continue;
      std::vector<long long> key(p.size());
      for (Eigen::Index k = 0; k < p.size(); ++k) key[k] = std::llround(p.data()[k]);
      if (seen.insert(key).second) so_moves_.push_back(p);
    }
  (void)qd;
}

Quotient Quotient::sl2() { return Quotient(QuotientKind::SL2Z, build_sl2(), std::nullopt); }

Quotient Quotient::sl(std::size_t n) {
  if (n == 2) return sl2();
  return Quotient(QuotientKind::SLNZ, build_sl(n), std::nullopt);
}

Quotient Quotient::so(const RationalMatrix& q) { return Quotient(QuotientKind::SOQZ, build_so_Q(q), q); }

std::string Quotient::descriptor() const {
  switch (kind_) {
    case QuotientKind::SL2Z: return "SL2(Z)";
    case QuotientKind::SLNZ: return "SL" + std::to_string(matrix_size()) + "(Z)";
    case QuotientKind::SOQZ: return "SO_Q(Z) Q=" + form_->str();
  }
  return "?";
}

std::optional<double> Quotient::volume() const {
  // dx dy dθ / y² over the fundamental domain is π²/3; the orthonormal frame
  // (E, H/2, F−E) at the identity has Gram determinant 32.
  if (kind_ == QuotientKind::SL2Z) return 4.0 * std::sqrt(2.0) * std::numbers::pi * std::numbers::pi / 3.0;
  return std::nullopt;
}

Reduction Quotient::reduce(const Matrix& g) const {
  switch (kind_) {
    case QuotientKind::SL2Z: {
      Reduction r = reduce_sl2(g);
      if (r.size_after > r.size_before) {
        r.representative = g;
        r.gamma = Matrix::Identity(2, 2);
        r.size_after = r.size_before;
      }
      return r;
    }
    case QuotientKind::SLNZ: {
      Reduction r = reduce_rows(g);
      if (r.size_after > r.size_before) {
        r.representative = g;
        r.gamma = Matrix::Identity(g.rows(), g.rows());
        r.size_after = r.size_before;
      }
      return r;
    }
    case QuotientKind::SOQZ: {
      Reduction r;
      const std::size_t n = g.rows();
      r.size_before = operator_size(g);
      Matrix gamma = Matrix::Identity(n, n);
      Matrix cur = g;
      double best = cur.squaredNorm();
      for (int round = 0; round < 500; ++round) {
        int pick = -1;
        double pick_val = best * (1 - 1e-12);
        for (std::size_t k = 0; k < so_moves_.size(); ++k) {
          double v = (so_moves_[k] * cur).squaredNorm();
          if (v < pick_val) {
            pick_val = v;
            pick = static_cast<int>(k);
          }
        }
        if (pick < 0) break;
        cur = so_moves_[pick] * cur;
        gamma = so_moves_[pick] * gamma;
        best = pick_val;
      }
      r.representative = cur;
      r.gamma = gamma;
      r.size_after = operator_size(cur);
      if (r.size_after > r.size_before) {
        r.representative = g;
        r.gamma = Matrix::Identity(n, n);
        r.size_after = r.size_before;
      }
      r.exact_reduction = false;
      r.warning = "best-effort descent by integral reflections";
      return r;
    }
  }
  throw DomainError("unsupported quotient");
}

double Quotient::height(const Matrix& g) const { return height_in_cusp(*algebra_, g).height; }

Reduction reduce_representative(const Quotient& x, const Matrix& g) { return x.reduce(g); }

std::optional<Displacement> closest_displacement(const Matrix& x, const Matrix& center, double cutoff) {
  const Eigen::Index n = x.rows();
  Eigen::PartialPivLU<Matrix> lx(x);
  Eigen::PartialPivLU<Matrix> lc(center);
  Matrix guess = center * lx.inverse();
  Matrix base = guess.array().round().matrix();
  // Entries far from an integer get both neighbours tried.
  std::vector<std::pair<double, Eigen::Index>> ambiguous;
  for (Eigen::Index k = 0; k < guess.size(); ++k) {
    double frac = guess.data()[k] - base.data()[k];
    if (std::abs(frac) > 0.2) ambiguous.push_back({-std::abs(frac), k});
  }
  std::sort(ambiguous.begin(), ambiguous.end());
  if (ambiguous.size() > 6) ambiguous.resize(6);
  // ‖A − I‖ ≤ e^{‖Y‖} − 1 for A = exp(Y) in a submultiplicative norm.
  const double bound = std::expm1(cutoff);
  // A − I for the rounded candidate, plus the rank-one change of each flip.
  const Matrix cinv = lc.inverse();
  const Matrix base_offset = cinv * base * x - Matrix::Identity(n, n);
  std::vector<Matrix> flips;
  std::vector<double> steps;
  for (const auto& [frac, k] : ambiguous) {
    const double step = guess.data()[k] > base.data()[k] ? 1.0 : -1.0;
    const Eigen::Index row = k % n, col = k / n;
    flips.push_back(step * cinv.col(row) * x.row(col));
    steps.push_back(step);
  }
  std::optional<Displacement> best;
  Matrix offset(n, n);
  for (std::size_t mask = 0; mask < (std::size_t{1} << ambiguous.size()); ++mask) {
    offset = base_offset;
    for (std::size_t b = 0; b < ambiguous.size(); ++b)
      if (mask >> b & 1) offset += flips[b];
    if (2 * offset.norm() > bound) continue;
    Matrix gamma = base;
    for (std::size_t b = 0; b < ambiguous.size(); ++b)
      if (mask >> b & 1) gamma.data()[ambiguous[b].second] += steps[b];
    if (std::abs(gamma.determinant() - 1.0) > 1e-6) continue;
    Matrix a = lc.solve(gamma * x);
    Matrix y = a.log();
    if (!y.allFinite()) continue;
    double d = norm(y);
    if (d <= cutoff && (!best || d < best->distance)) best = Displacement{a, gamma, y, d};
  }
  return best;
}

double lattice_distance(const Matrix& x, const Matrix& center, double cutoff) {
  auto d = closest_displacement(x, center, cutoff);
  return d ? d->distance : std::numeric_limits<double>::infinity();
}

}  // namespace orbitlab
