#pragma once

#include <map>
#include <string>
#include <vector>

#include "orbitlab/algebra.hpp"

namespace orbitlab {

// Sorted basis indices; std::map over these iterates in lexicographic subset order.
using Subset = std::vector<int>;

constexpr std::size_t kMaxWedgeDegree = 12;

// All k-subsets of {0..m-1} in lexicographic order.
std::vector<Subset> subsets(std::size_t m, std::size_t k);

// Exact element of ∧^k of an m-dimensional space, stored sparsely.
class WedgeVector {
 public:
  WedgeVector() = default;
  WedgeVector(std::size_t ambient_dim, std::size_t degree);

  std::size_t ambient_dim() const { return m_; }
  std::size_t degree() const { return k_; }
  const std::map<Subset, Rational>& coords() const { return coords_; }
  Rational coefficient(const Subset& s) const;
  void set(const Subset& s, const Rational& value);
  void add_to(const Subset& s, const Rational& value);

  bool is_zero() const { return coords_.empty(); }
  // Set by primitive normalization: integer coordinates, gcd 1, first nonzero positive.
  bool integral_primitive() const { return primitive_; }
  void mark_primitive(bool p) { primitive_ = p; }
  bool check_primitive() const;

  WedgeVector scaled(const Rational& s) const;
  Vector dense() const;  // indexed as subsets(m, k)
  std::string str() const;

  bool operator==(const WedgeVector& o) const { return m_ == o.m_ && k_ == o.k_ && coords_ == o.coords_; }

 private:
  std::size_t m_ = 0;
  std::size_t k_ = 0;
  std::map<Subset, Rational> coords_;
  bool primitive_ = false;
};

// Lie(M) given by an exact spanning set in the coordinates of the ambient algebra.
struct SubgroupData {
  std::vector<RationalVector> algebra;
  std::string label;

  std::size_t dimension() const;
};

void validate_subgroup(const LieAlgebra& g, const SubgroupData& m);
// γ M γ⁻¹: Ad_γ applied to the spanning set.
SubgroupData conjugate_subgroup(const LieAlgebra& g, const SubgroupData& m, const RationalMatrix& gamma);

// Exact wedge of k coordinate vectors.
WedgeVector wedge(const std::vector<RationalVector>& vectors, std::size_t ambient_dim);
// z ∧ w for a degree-one z.
WedgeVector wedge_with(const RationalVector& z, const WedgeVector& w);
WedgeVector primitive_normalize(const WedgeVector& w);

WedgeVector wedge_basis_vector(const SubgroupData& m, std::size_t ambient_dim);
WedgeVector induced_action(const LieAlgebra& g, const RationalMatrix& group_element, const WedgeVector& w);
// η_M(g) = ρ(g⁻¹) v_M.
WedgeVector orbit_map(const LieAlgebra& g, const SubgroupData& m, const RationalMatrix& group_element);

// Norm on ∧^k induced by the Gram matrix of the algebra basis.
double wedge_norm(const LieAlgebra& g, const WedgeVector& w);
double wedge_norm(const LieAlgebra& g, std::size_t k, const Vector& dense);
// Exact ‖w‖² (the Gram data is rational).
Rational wedge_norm_sq_exact(const LieAlgebra& g, const WedgeVector& w);

double discriminant(const LieAlgebra& g, const SubgroupData& m, const RationalMatrix& group_element);
double subgroup_height(const LieAlgebra& g, const SubgroupData& m);
// ‖ẑ ∧ η_M(g)‖ with ẑ = z/‖z‖.
double transversal_norm(const LieAlgebra& g, const SubgroupData& m, const RationalMatrix& group_element,
                        const RationalVector& z);
// Exact test of z ∈ Ad(g⁻¹)Lie(M), via the wedge.
bool transversal_vanishes(const LieAlgebra& g, const SubgroupData& m, const RationalMatrix& group_element,
                          const RationalVector& z);

// Double-precision machinery for scanning many subgroups at one group element.
// C_k(A): entry (T, S) = det A[T, S].
Matrix compound_matrix(const Matrix& a, const std::vector<Subset>& rows_cols);
// Matrix of w ↦ z ∧ w from ∧^k to ∧^{k+1}.
Matrix wedge_with_matrix(const Vector& z, std::size_t m, std::size_t k);

class OrbitMapEvaluator {
 public:
  // Caches C_k(Ad(g⁻¹)) and the wedge-with-ẑ map.
  OrbitMapEvaluator(const LieAlgebra& g, std::size_t k, const Matrix& group_element, const Vector& z);
  Vector orbit(const Vector& v_dense) const { return compound_ * v_dense; }
  double norm(const Vector& w) const { return wedge_norm(*algebra_, k_, w); }
  double transversal(const Vector& eta) const { return wedge_norm(*algebra_, k_ + 1, zwedge_ * eta); }

 private:
  const LieAlgebra* algebra_;
  std::size_t k_;
  Matrix compound_;
  Matrix zwedge_;
};

}  // namespace orbitlab
