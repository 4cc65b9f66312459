#include "orbitlab/algebra.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>

#include "orbitlab/errors.hpp"
#include "orbitlab/lattice.hpp"

namespace orbitlab {

double norm(const RationalMatrix& x) { return norm(x.to_double()); }
double norm(const Matrix& x) { return 2.0 * x.norm(); }

RationalMatrix bracket(const RationalMatrix& x, const RationalMatrix& y) {
  if (!x.square() || x.rows() != y.rows() || x.cols() != y.cols())
    throw DomainError("bracket: dimension mismatch");
  return x * y - y * x;
}

Matrix bracket(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) throw DomainError("bracket: dimension mismatch");
  return x * y - y * x;
}

RationalMatrix adjoint(const RationalMatrix& g, const RationalMatrix& x) {
  if (g.rows() != x.rows()) throw DomainError("adjoint: dimension mismatch");
  return g * x * inverse(g);
}

bool is_nilpotent(const RationalMatrix& x) {
  if (!x.square()) return false;
  return power(x, static_cast<unsigned>(x.rows())).is_zero();
}

RationalMatrix exp_nilpotent(const RationalMatrix& x) {
  if (!x.square()) throw DomainError("exp_nilpotent: non-square matrix");
  const std::size_t n = x.rows();
  RationalMatrix sum = RationalMatrix::identity(n);
  RationalMatrix term = RationalMatrix::identity(n);
  for (std::size_t k = 1; k <= n; ++k) {
    term = term * x * Rational(1, k);
    if (term.is_zero()) return sum;
    sum += term;
  }
  throw DomainError("exp_nilpotent: matrix is not nilpotent");
}

Matrix expm(const Matrix& x) { return x.exp(); }
Matrix logm(const Matrix& x) { return x.log(); }

double max_entry(const Matrix& g) { return g.cwiseAbs().maxCoeff(); }

double operator_size(const Matrix& g) {
  if (g.rows() != g.cols()) throw DomainError("operator_size: non-square matrix");
  Eigen::FullPivLU<Matrix> lu(g);
  if (!lu.isInvertible()) throw DomainError("operator_size: singular matrix");
  return std::min(max_entry(g), max_entry(lu.inverse()));
}

double operator_size(const RationalMatrix& g) {
  RationalMatrix inv = inverse(g);
  auto sup = [](const RationalMatrix& m) {
    Rational best = 0;
    for (const auto& q : m.flat()) best = std::max(best, Rational(abs(q)));
    return best;
  };
  return std::min(sup(g), sup(inv)).get_d();
}

LieAlgebra::LieAlgebra(std::string name, std::vector<RationalMatrix> basis)
    : name_(std::move(name)), basis_(std::move(basis)) {
  if (basis_.empty()) throw DomainError("Lie algebra with empty basis");
  n_ = basis_[0].rows();
  const std::size_t m = basis_.size();
  for (const auto& b : basis_) {
    if (b.rows() != n_ || b.cols() != n_) throw DomainError("basis matrices of unequal size");
    for (const auto& q : b.flat())
      if (q.get_den() != 1) throw DomainError("basis matrix is not integral");
    basis_d_.push_back(b.to_double());
  }
  // Pivot entries: an m-subset of matrix positions where the basis is independent.
  RationalMatrix flat(m, n_ * n_);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t e = 0; e < n_ * n_; ++e) flat(i, e) = basis_[i].flat()[e];
  rref(flat, &pivot_entries_);
  if (pivot_entries_.size() != m) throw DomainError("basis matrices are linearly dependent");
  RationalMatrix sub(m, m);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t i = 0; i < m; ++i) sub(r, i) = basis_[i].flat()[pivot_entries_[r]];
  pivot_inverse_ = inverse(sub);
  pivot_inverse_d_ = pivot_inverse_.to_double();

  structure_.assign(m * m * m, Rational(0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      auto c = try_coordinates(orbitlab::bracket(basis_[i], basis_[j]));
      if (!c) throw DomainError("basis of " + name_ + " is not closed under the bracket");
      for (std::size_t k = 0; k < m; ++k) {
        structure_[(i * m + j) * m + k] = (*c)[k];
        structure_[(j * m + i) * m + k] = -(*c)[k];
      }
    }

  gram_ = RationalMatrix(m, m);
  gram_diagonal_ = true;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      gram_(i, j) = 4 * (basis_[i].transpose() * basis_[j]).trace();
      if (i != j && sgn(gram_(i, j)) != 0) gram_diagonal_ = false;
    }
  gram_d_ = gram_.to_double();
  // Orthonormal frame: F with Fᵀ G F = I.
  Eigen::LLT<Matrix> llt(gram_d_);
  Matrix U = llt.matrixU();
  frame_ = U.triangularView<Eigen::Upper>().solve(Matrix::Identity(m, m));
}

RationalMatrix LieAlgebra::element(const RationalVector& c) const {
  if (c.size() != dim()) throw DomainError("coordinate vector has wrong dimension");
  RationalMatrix x(n_, n_);
  for (std::size_t i = 0; i < dim(); ++i)
    if (sgn(c[i]) != 0) x += basis_[i] * c[i];
  return x;
}

Matrix LieAlgebra::element(const Vector& c) const {
  if (static_cast<std::size_t>(c.size()) != dim()) throw DomainError("coordinate vector has wrong dimension");
  Matrix x = Matrix::Zero(n_, n_);
  for (std::size_t i = 0; i < dim(); ++i)
    if (c[i] != 0) x += c[i] * basis_d_[i];
  return x;
}

std::optional<RationalVector> LieAlgebra::try_coordinates(const RationalMatrix& x) const {
  if (x.rows() != n_ || x.cols() != n_) throw DomainError("matrix has wrong size for this algebra");
  RationalVector picked(dim());
  for (std::size_t r = 0; r < dim(); ++r) picked[r] = x.flat()[pivot_entries_[r]];
  RationalVector c = pivot_inverse_ * picked;
  if (element(c) != x) return std::nullopt;
  return c;
}

RationalVector LieAlgebra::coordinates(const RationalMatrix& x) const {
  auto c = try_coordinates(x);
  if (!c) throw DomainError("matrix does not lie in " + name_);
  return *c;
}

Vector LieAlgebra::coordinates(const Matrix& x, double* residual) const {
  if (static_cast<std::size_t>(x.rows()) != n_ || static_cast<std::size_t>(x.cols()) != n_)
    throw DomainError("matrix has wrong size for this algebra");
  Vector picked(dim());
  for (std::size_t r = 0; r < dim(); ++r) {
    std::size_t e = pivot_entries_[r];
    picked[r] = x(e / n_, e % n_);
  }
  Vector c = pivot_inverse_d_ * picked;
  if (residual) *residual = (element(c) - x).norm();
  return c;
}

RationalVector LieAlgebra::bracket(const RationalVector& x, const RationalVector& y) const {
  const std::size_t m = dim();
  RationalVector r(m, Rational(0));
  for (std::size_t i = 0; i < m; ++i) {
    if (sgn(x[i]) == 0) continue;
    for (std::size_t j = 0; j < m; ++j) {
      if (sgn(y[j]) == 0 || i == j) continue;
      Rational xy = x[i] * y[j];
      for (std::size_t k = 0; k < m; ++k) {
        const Rational& c = structure_constant(i, j, k);
        if (sgn(c) != 0) r[k] += xy * c;
      }
    }
  }
  return r;
}

Vector LieAlgebra::bracket(const Vector& x, const Vector& y) const { return ad(x) * y; }

RationalMatrix LieAlgebra::ad(const RationalVector& x) const {
  const std::size_t m = dim();
  RationalMatrix a(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    if (sgn(x[i]) == 0) continue;
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < m; ++k) {
        const Rational& c = structure_constant(i, j, k);
        if (sgn(c) != 0) a(k, j) += x[i] * c;
      }
  }
  return a;
}

Matrix LieAlgebra::ad(const Vector& x) const {
  const std::size_t m = dim();
  Matrix a = Matrix::Zero(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    if (x[i] == 0) continue;
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < m; ++k) {
        const Rational& c = structure_constant(i, j, k);
        if (sgn(c) != 0) a(k, j) += x[i] * c.get_d();
      }
  }
  return a;
}

RationalMatrix LieAlgebra::adjoint_matrix(const RationalMatrix& g) const {
  RationalMatrix ginv = inverse(g);
  RationalMatrix a(dim(), dim());
  for (std::size_t j = 0; j < dim(); ++j) {
    RationalVector c = coordinates(g * basis_[j] * ginv);
    for (std::size_t k = 0; k < dim(); ++k) a(k, j) = c[k];
  }
  return a;
}

Matrix LieAlgebra::adjoint_matrix(const Matrix& g) const {
  Eigen::FullPivLU<Matrix> lu(g);
  if (!lu.isInvertible()) throw DomainError("adjoint_matrix: singular group element");
  Matrix ginv = lu.inverse();
  Matrix a(dim(), dim());
  for (std::size_t j = 0; j < dim(); ++j) a.col(j) = coordinates(Matrix(g * basis_d_[j] * ginv));
  return a;
}

double LieAlgebra::norm(const Vector& x) const { return std::sqrt(std::max(0.0, inner(x, x))); }

bool LieAlgebra::jacobi_holds() const {
  const std::size_t m = dim();
  auto e = [&](std::size_t i) {
    RationalVector v(m, Rational(0));
    v[i] = 1;
    return v;
  };
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j)
      for (std::size_t k = j + 1; k < m; ++k) {
        auto a = bracket(e(i), bracket(e(j), e(k)));
        auto b = bracket(e(j), bracket(e(k), e(i)));
        auto c = bracket(e(k), bracket(e(i), e(j)));
        if (!is_zero(add(add(a, b), c))) return false;
      }
  return true;
}

bool LieAlgebra::is_subalgebra(const std::vector<RationalVector>& span) const {
  auto basis = span_basis(span);
  for (std::size_t i = 0; i < basis.size(); ++i)
    for (std::size_t j = i + 1; j < basis.size(); ++j)
      if (!in_span(basis, bracket(basis[i], basis[j]))) return false;
  return true;
}

bool LieAlgebra::is_ideal(const std::vector<RationalVector>& span) const {
  auto basis = span_basis(span);
  for (std::size_t i = 0; i < dim(); ++i) {
    RationalVector e(dim(), Rational(0));
    e[i] = 1;
    for (const auto& b : basis)
      if (!in_span(basis, bracket(e, b))) return false;
  }
  return true;
}

std::vector<RationalVector> LieAlgebra::lie_closure(const std::vector<RationalVector>& generators) const {
  auto basis = span_basis(generators);
  bool grew = true;
  while (grew) {
    grew = false;
    for (std::size_t i = 0; i < basis.size() && !grew; ++i)
      for (std::size_t j = i + 1; j < basis.size() && !grew; ++j) {
        auto b = bracket(basis[i], basis[j]);
        if (!in_span(basis, b)) {
          basis.push_back(b);
          basis = span_basis(basis);
          grew = true;
        }
      }
  }
  return basis;
}

AlgebraPtr build_sl(std::size_t n) {
  if (n < 2) throw DomainError("sl_N needs N >= 2");
  std::vector<RationalMatrix> basis;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) basis.push_back(RationalMatrix::unit(n, i, j));
  for (std::size_t i = 0; i + 1 < n; ++i)
    basis.push_back(RationalMatrix::unit(n, i, i) - RationalMatrix::unit(n, i + 1, i + 1));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) basis.push_back(RationalMatrix::unit(n, i, j));
  return std::make_shared<LieAlgebra>("sl" + std::to_string(n), std::move(basis));
}

AlgebraPtr build_sl2() { return build_sl(2); }

AlgebraPtr build_sl2_pair() {
  auto block = [](std::size_t off, std::size_t i, std::size_t j) { return RationalMatrix::unit(4, off + i, off + j); };
  std::vector<RationalMatrix> basis;
  for (std::size_t off : {0, 2}) {
    basis.push_back(block(off, 0, 1));
    basis.push_back(block(off, 0, 0) - block(off, 1, 1));
    basis.push_back(block(off, 1, 0));
  }
  return std::make_shared<LieAlgebra>("sl2+sl2", std::move(basis));
}

Rational quadratic_value(const RationalMatrix& q, const RationalVector& v) {
  RationalVector qv = q * v;
  Rational s = 0;
  for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * qv[i];
  return s;
}

AlgebraPtr build_so_Q(const RationalMatrix& q) {
  if (!q.square() || q != q.transpose()) throw DomainError("Q must be a symmetric square matrix");
  for (const auto& x : q.flat())
    if (x.get_den() != 1) throw DomainError("Q must be integral");
  if (sgn(determinant(q)) == 0) throw DomainError("Q is degenerate");
  const std::size_t n = q.rows();
  // Linear conditions XᵀQ + QX = 0 on the n² entries of X.
  RationalMatrix cond(n * n, n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) {
        cond(i * n + j, k * n + i) += q(k, j);  // (XᵀQ)_ij = Σ_k X_ki Q_kj
        cond(i * n + j, k * n + j) += q(i, k);  // (QX)_ij = Σ_k Q_ik X_kj
      }
  auto lattice = saturate(kernel(cond));
  // Short, nearly orthogonal Z-basis of so_Q ∩ Mat_n(Z).
  const std::size_t m = lattice.size();
  RationalMatrix gram(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      Rational s = 0;
      for (std::size_t e = 0; e < n * n; ++e) s += lattice[i][e] * lattice[j][e];
      gram(i, j) = s;
    }
  RationalMatrix t;
  lll_gram(gram, &t);
  std::vector<RationalVector> reduced;
  for (std::size_t i = 0; i < m; ++i) {
    RationalVector v(n * n, Rational(0));
    for (std::size_t j = 0; j < m; ++j)
      if (sgn(t(i, j)) != 0)
        for (std::size_t e = 0; e < n * n; ++e) v[e] += t(i, j) * lattice[j][e];
    reduced.push_back(primitive_integral(v));
  }
  auto first_nonzero = [](const RationalVector& v) {
    return static_cast<std::size_t>(std::find_if(v.begin(), v.end(), [](const Rational& x) { return sgn(x) != 0; }) -
                                    v.begin());
  };
  std::sort(reduced.begin(), reduced.end(), [&](const RationalVector& a, const RationalVector& b) {
    std::size_t fa = first_nonzero(a), fb = first_nonzero(b);
    if (fa != fb) return fa < fb;
    return a > b;
  });
  std::vector<RationalMatrix> basis;
  for (const auto& v : reduced) {
    RationalMatrix x(n, n);
    for (std::size_t e = 0; e < n * n; ++e) x(e / n, e % n) = v[e];
    basis.push_back(x);
  }
  return std::make_shared<LieAlgebra>("so_Q", std::move(basis));
}

NilpotentDirection::NilpotentDirection(AlgebraPtr algebra, RationalVector z)
    : algebra_(std::move(algebra)), z_(std::move(z)) {
  if (z_.size() != algebra_->dim()) throw DomainError("direction has wrong dimension");
  if (is_zero(z_)) throw DomainError("zero direction");
  z_matrix_ = algebra_->element(z_);
  const std::size_t n = algebra_->matrix_size();
  RationalMatrix term = RationalMatrix::identity(n);
  coeffs_.push_back(term);
  for (std::size_t k = 1; k <= n; ++k) {
    term = term * z_matrix_ * Rational(1, k);
    if (term.is_zero()) break;
    if (k == n) throw DomainError("direction is not nilpotent");
    coeffs_.push_back(term);
  }
  unsigned mat_order = static_cast<unsigned>(coeffs_.size());
  RationalMatrix adz = algebra_->ad(z_);
  RationalMatrix p = adz;
  unsigned ad_order = 1;
  while (!p.is_zero()) {
    p = p * adz;
    ++ad_order;
  }
  order_ = std::max(mat_order, ad_order);
  norm_ = orbitlab::norm(z_matrix_);
  for (const auto& c : coeffs_) coeffs_d_.push_back(c.to_double());
}

RationalMatrix NilpotentDirection::unipotent_at(const Rational& t) const {
  // Horner in t.
  RationalMatrix r = coeffs_.back();
  for (std::size_t j = coeffs_.size() - 1; j-- > 0;) r = r * t + coeffs_[j];
  return r;
}

Matrix NilpotentDirection::unipotent_at(double t) const {
  Matrix r = coeffs_d_.back();
  for (std::size_t j = coeffs_d_.size() - 1; j-- > 0;) r = r * t + coeffs_d_[j];
  return r;
}

}  // namespace orbitlab
