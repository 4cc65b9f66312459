#pragma once

#include <optional>
#include <string>
#include <vector>

#include "orbitlab/algebra.hpp"
#include "orbitlab/lattice.hpp"

namespace orbitlab {

// Ad(g⁻¹)𝔤(ℤ), as the coordinate vectors Ad(g⁻¹)X_i.
struct LatticeBasis {
  std::vector<RationalVector> vectors;
  RationalMatrix gram(const LieAlgebra& g) const;
};

struct HeightReport {
  double height = 0;               // 1/λ₁
  RationalVector coefficients;     // shortest vector on the lattice basis (integers)
  Vector shortest_vector;          // its coordinates in 𝔤
  std::optional<RationalVector> shortest_exact;  // exact coordinates when g is rational
  bool certified = false;
  double height_lower = 0;         // two-sided bounds; equal to height when certified
  double height_upper = 0;
  std::size_t nodes = 0;
};

LatticeBasis adjoint_lattice(const LieAlgebra& g, const RationalMatrix& group_element);
HeightReport height_in_cusp(const LieAlgebra& g, const RationalMatrix& group_element,
                            std::size_t node_budget = kDefaultNodeBudget);
HeightReport height_in_cusp(const LieAlgebra& g, const Matrix& group_element,
                            std::size_t node_budget = kDefaultNodeBudget);
// ht ≤ 1/η. Throws DomainError when an uncertified report cannot decide.
bool in_compact_part(const HeightReport& report, double eta);
double minht_estimate(const LieAlgebra& g, const std::vector<Matrix>& orbit_samples);

enum class QuotientKind { SL2Z, SLNZ, SOQZ };

struct Reduction {
  Matrix representative;     // γg
  Matrix gamma;              // integral, determinant one
  double size_before = 0;    // |g|
  double size_after = 0;     // |γg|
  bool exact_reduction = false;  // false for best-effort or unsupported reductions
  std::string warning;
};

// Γ\G together with the algebra, reduction procedure and known volume.
class Quotient {
 public:
  static Quotient sl2();
  static Quotient sl(std::size_t n);
  static Quotient so(const RationalMatrix& q);

  QuotientKind kind() const { return kind_; }
  const AlgebraPtr& algebra() const { return algebra_; }
  const std::optional<RationalMatrix>& form() const { return form_; }
  std::size_t matrix_size() const { return algebra_->matrix_size(); }
  std::string descriptor() const;
  // Haar volume for the orthonormal-Lebesgue normalization on 𝔤, when known in closed form.
  std::optional<double> volume() const;

  Reduction reduce(const Matrix& g) const;
  double height(const Matrix& g) const;

 private:
  Quotient(QuotientKind kind, AlgebraPtr algebra, std::optional<RationalMatrix> form);
  QuotientKind kind_;
  AlgebraPtr algebra_;
  std::optional<RationalMatrix> form_;
  std::vector<Matrix> so_moves_;  // products of two integral reflections, for SO_Q(ℤ) descent
};

Reduction reduce_representative(const Quotient& x, const Matrix& g);

// LLL on the rows of g (the lattice ℤ^N g), determinant-one transform.
Reduction reduce_rows(const Matrix& g);
// Gauss reduction of a 2×2 row lattice.
Reduction reduce_sl2(const Matrix& g);

struct Displacement {
  Matrix element;  // A = c⁻¹γx
  Matrix gamma;    // integral, determinant one
  Matrix log;      // log A
  double distance = 0;  // ‖log A‖
};
// The γ minimizing ‖log(c⁻¹γx)‖ among integral candidates near round(c x⁻¹),
// or nothing when none lands within `cutoff`. Both points should be reduced.
std::optional<Displacement> closest_displacement(const Matrix& x, const Matrix& center, double cutoff);

// Left-invariant distance on SL_N(ℤ)\SL_N(ℝ) between two points, computed
// from reduced row lattices: min over γ of ‖log(c⁻¹γx)‖, searched near
// round(c x⁻¹). Returns +∞ when no candidate lands within `cutoff`.
double lattice_distance(const Matrix& x, const Matrix& center, double cutoff);

}  // namespace orbitlab
