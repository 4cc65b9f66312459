#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "orbitlab/rational.hpp"

namespace orbitlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ‖X‖ = 2·‖X‖_F. Submultiplicative with room to spare, so ‖[X,Y]‖ ≤ ‖X‖‖Y‖.
double norm(const RationalMatrix& x);
double norm(const Matrix& x);

RationalMatrix bracket(const RationalMatrix& x, const RationalMatrix& y);
Matrix bracket(const Matrix& x, const Matrix& y);

// Ad_g X = g X g⁻¹.
RationalMatrix adjoint(const RationalMatrix& g, const RationalMatrix& x);

// Finite exponential series of a nilpotent matrix.
RationalMatrix exp_nilpotent(const RationalMatrix& x);
bool is_nilpotent(const RationalMatrix& x);

// General double-precision exponential/logarithm (scaling and squaring / Padé).
Matrix expm(const Matrix& x);
Matrix logm(const Matrix& x);

// |g| = min(‖g‖_∞, ‖g⁻¹‖_∞) with the max-entry norm.
double operator_size(const RationalMatrix& g);
double operator_size(const Matrix& g);
double max_entry(const Matrix& g);

// A Lie subalgebra of sl_N given by an integral basis, with exact structure
// constants and the Euclidean structure induced from the matrix norm.
class LieAlgebra {
 public:
  LieAlgebra(std::string name, std::vector<RationalMatrix> basis);

  const std::string& name() const { return name_; }
  std::size_t dim() const { return basis_.size(); }
  std::size_t matrix_size() const { return n_; }
  const std::vector<RationalMatrix>& basis() const { return basis_; }
  const RationalMatrix& basis(std::size_t i) const { return basis_[i]; }
  const Matrix& basis_double(std::size_t i) const { return basis_d_[i]; }

  RationalMatrix element(const RationalVector& coords) const;
  Matrix element(const Vector& coords) const;
  std::optional<RationalVector> try_coordinates(const RationalMatrix& x) const;
  RationalVector coordinates(const RationalMatrix& x) const;  // DomainError when x is outside
  // Coordinates read off a pivot subset of entries; the residual of the
  // reconstruction is returned through `residual` when requested.
  Vector coordinates(const Matrix& x, double* residual = nullptr) const;
  bool contains(const RationalMatrix& x) const { return try_coordinates(x).has_value(); }

  const Rational& structure_constant(std::size_t i, std::size_t j, std::size_t k) const {
    return structure_[(i * dim() + j) * dim() + k];
  }
  RationalVector bracket(const RationalVector& x, const RationalVector& y) const;
  Vector bracket(const Vector& x, const Vector& y) const;
  // Matrix of ad_X on coordinates.
  RationalMatrix ad(const RationalVector& x) const;
  Matrix ad(const Vector& x) const;
  // Matrix of Ad_g on coordinates; column j holds Ad_g X_j.
  RationalMatrix adjoint_matrix(const RationalMatrix& g) const;
  Matrix adjoint_matrix(const Matrix& g) const;

  // Exact Gram matrix ⟨X_i, X_j⟩ = 4 tr(X_iᵀ X_j).
  const RationalMatrix& gram() const { return gram_; }
  const Matrix& gram_double() const { return gram_d_; }
  bool gram_is_diagonal() const { return gram_diagonal_; }
  double inner(const Vector& x, const Vector& y) const { return x.dot(gram_d_ * y); }
  double norm(const Vector& x) const;
  double norm(const RationalVector& x) const { return norm(to_double(x)); }
  // Columns: coordinates of an orthonormal basis (Gram–Schmidt on the given basis).
  const Matrix& orthonormal_frame() const { return frame_; }

  bool jacobi_holds() const;
  bool is_subalgebra(const std::vector<RationalVector>& span) const;
  bool is_ideal(const std::vector<RationalVector>& span) const;
  // Smallest subalgebra containing the given vectors (exact).
  std::vector<RationalVector> lie_closure(const std::vector<RationalVector>& generators) const;

 private:
  std::string name_;
  std::size_t n_ = 0;
  std::vector<RationalMatrix> basis_;
  std::vector<Matrix> basis_d_;
  std::vector<std::size_t> pivot_entries_;
  RationalMatrix pivot_inverse_;
  Matrix pivot_inverse_d_;
  std::vector<Rational> structure_;
  RationalMatrix gram_;
  Matrix gram_d_;
  bool gram_diagonal_ = false;
  Matrix frame_;
};

using AlgebraPtr = std::shared_ptr<const LieAlgebra>;

AlgebraPtr build_sl(std::size_t n);  // e_ij (i<j), e_ii - e_{i+1,i+1}, e_ij (i>j)
AlgebraPtr build_sl2();               // (E, H, F)
AlgebraPtr build_sl2_pair();          // sl2 ⊕ sl2 block-diagonal in sl4
AlgebraPtr build_so_Q(const RationalMatrix& q);
// Evaluate the quadratic form.
Rational quadratic_value(const RationalMatrix& q, const RationalVector& v);

// One-parameter unipotent subgroup u_t = exp(t z), with the polynomial
// coefficients z^j / j! cached once.
class NilpotentDirection {
 public:
  NilpotentDirection(AlgebraPtr algebra, RationalVector z);

  const LieAlgebra& algebra() const { return *algebra_; }
  const AlgebraPtr& algebra_ptr() const { return algebra_; }
  const RationalVector& z() const { return z_; }
  const RationalMatrix& matrix() const { return z_matrix_; }
  unsigned nilpotency_order() const { return order_; }
  unsigned matrix_order() const { return static_cast<unsigned>(coeffs_.size()); }
  double norm() const { return norm_; }
  const std::vector<RationalMatrix>& coefficients() const { return coeffs_; }

  RationalMatrix unipotent_at(const Rational& t) const;
  Matrix unipotent_at(double t) const;

 private:
  AlgebraPtr algebra_;
  RationalVector z_;
  RationalMatrix z_matrix_;
  unsigned order_ = 0;
  double norm_ = 0;
  std::vector<RationalMatrix> coeffs_;
  std::vector<Matrix> coeffs_d_;
};

}  // namespace orbitlab
