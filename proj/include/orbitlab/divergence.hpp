#pragma once

#include <compare>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "orbitlab/cusp.hpp"
#include "orbitlab/exterior.hpp"
#include "orbitlab/ledger.hpp"

namespace orbitlab {

// p(t) = Ad_{u_{−t}}(r) − r = Σ_{j≥1} (−t)^j/j! · ad_z^j(r).
struct DisplacementPolynomial {
  AlgebraPtr algebra;
  std::vector<RationalVector> coefficients;  // p_0 … p_deg; empty when built from a double r
  std::vector<Vector> coefficients_double;

  std::size_t degree() const { return coefficients_double.empty() ? 0 : coefficients_double.size() - 1; }
  bool is_zero() const;
  RationalVector at(const Rational& t) const;
  Vector at(double t) const;
  Vector derivative(double t) const;
  // ‖p(t)‖² as a polynomial in t (ascending powers).
  std::vector<double> norm_squared() const;
};

DisplacementPolynomial displacement_polynomial(const NilpotentDirection& u, const RationalVector& r);
DisplacementPolynomial displacement_polynomial(const NilpotentDirection& u, const Vector& r);

struct SupNorm {
  double value = 0;   // largest sampled ‖p‖ (attained)
  double upper = 0;   // value plus the derivative-bound remainder
  double argmax = 0;
};
// Chebyshev nodes plus the critical points of ‖p‖², refined until the
// remainder L·h/2 is below `tolerance`·max(1, value) or the node budget ends.
SupNorm sup_norm_on_interval(const DisplacementPolynomial& p, double a, double b, double tolerance = 1e-9);

enum class SplitCase { Flat, Divergent };
std::string to_string(SplitCase c);

struct CaseSplit {
  SplitCase kind = SplitCase::Flat;
  double t0 = 0, horizon = 0;  // [t₀, ε^{−K}]
  double sup = 0;
  // Flat: sup over the shortened [t₀, t₁], t₁ = ε^{−K/2}, and its ratio to t₁ε^K.
  double t1 = 0, short_sup = 0, short_ratio = 0;
  // Divergent: T = ½ inf{t ≥ t₀ : ‖p(t)‖ ≥ κ₆}.
  double crossing_time = 0, crossing_residual = 0;
};
CaseSplit case_split(const DisplacementPolynomial& p, double eps, double K, const ConstantLedger& ledger, double t0 = 0);

// 𝔤 = 𝔰 ⊕ 𝔯 with frames orthonormal inside each summand.
class Decomposition {
 public:
  Decomposition(AlgebraPtr g, std::vector<RationalVector> s, std::vector<RationalVector> r);

  const LieAlgebra& algebra() const { return *algebra_; }
  const AlgebraPtr& algebra_ptr() const { return algebra_; }
  const std::vector<RationalVector>& s_basis() const { return s_; }
  const std::vector<RationalVector>& r_basis() const { return r_; }
  std::size_t dim_s() const { return s_.size(); }
  std::size_t dim_r() const { return r_.size(); }
  const Matrix& s_frame() const { return s_frame_; }  // columns: 𝔤-coordinates
  const Matrix& r_frame() const { return r_frame_; }
  // (𝔰-part, 𝔯-part) of v, both in 𝔤-coordinates.
  std::pair<Vector, Vector> components(const Vector& v) const;

 private:
  AlgebraPtr algebra_;
  std::vector<RationalVector> s_, r_;
  Matrix s_frame_, r_frame_;
  Eigen::PartialPivLU<Matrix> joint_;
};

// Gram–Schmidt inside span(vectors) for the algebra inner product.
Matrix orthonormal_frame(const LieAlgebra& g, const std::vector<RationalVector>& vectors);

struct Complement {
  std::vector<RationalVector> basis;
  double kappa1 = 1;  // min ‖v+w‖²/(‖v‖²+‖w‖²) over v ∈ 𝔰, w ∈ 𝔯
  std::string method;
};
// H-invariant complement: trace-form orthogonal when the trace form is
// nondegenerate on 𝔰, otherwise the kernel of an ad(𝔥)-equivariant projection
// onto 𝔰 (exact linear solve). DomainError when 𝔰 is not 𝔥-invariant or no
// invariant complement exists.
Complement invariant_complement(const LieAlgebra& g, const std::vector<RationalVector>& s,
                                const std::vector<RationalVector>& h_generators);
// Complement orthogonal for the algebra inner product (no invariance).
std::vector<RationalVector> orthogonal_complement(const LieAlgebra& g, const std::vector<RationalVector>& s);
double distortion_constant(const LieAlgebra& g, const std::vector<RationalVector>& s,
                           const std::vector<RationalVector>& r);

// Solves A = exp(X₁)exp(X₂) with X₁ ∈ span(first), X₂ ∈ span(second) by
// Newton iteration on the logarithm. Results in 𝔤-coordinates.
struct ProductSplit {
  Vector first, second;
  double residual = 0;  // ‖log(exp(X₁)exp(X₂)) − log A‖ at exit
  int iterations = 0;
  bool converged = false;
};
ProductSplit split_product(const LieAlgebra& g, const Matrix& a, const Matrix& first_frame, const Matrix& second_frame,
                           double tolerance = 1e-13, int max_iterations = 60);

struct BchSplit {
  Vector z_r, z_s;
  double residual = 0;  // ‖exp(Z_𝔯)exp(Z_𝔰) − exp(r₁)exp(r₂)⁻¹‖
  int iterations = 0;
  bool bounds_hold = false;  // ‖Z_𝔰‖ ≤ ‖r₁−r₂‖ and κ₆‖r₁−r₂‖ ≤ ‖Z_𝔯‖ ≤ ‖r₁−r₂‖/κ₆
};
// exp(r₁)exp(r₂)⁻¹ = exp(Z_𝔯)exp(Z_𝔰). Inputs in 𝔯 with norm ≤ κ₆.
// ConvergenceError when Newton fails.
BchSplit bch_split(const Decomposition& dec, const Vector& r1, const Vector& r2, double kappa6);

// min{‖v̂+ŵ‖, ‖v̂−ŵ‖} for unit representatives in the metric `gram`.
double projective_distance(const Vector& v, const Vector& w, const Matrix& gram);
double projective_distance(const LieAlgebra& g, const Vector& v, const Vector& w);
double projective_distance(const LieAlgebra& g, const WedgeVector& v, const WedgeVector& w);
// d(Ad(m)·v̂_𝔰, v̂_𝔰) for the line of ∧^k 𝔰, frame columns spanning 𝔰.
double subspace_displacement(const LieAlgebra& g, const Matrix& m, const Matrix& frame);

struct CellIndex {
  std::vector<long> s, r;
  auto operator<=>(const CellIndex&) const = default;
};

// Thin boxes around y·exp(Ω_𝔰)exp(Ω_𝔯): width R^{−κ} along 𝔰, R^{−2} along 𝔯,
// cube cells in the orthonormal frames of each summand (no overlap).
class BoxCover {
 public:
  struct Location {
    Vector ys, yr;        // 𝔤-coordinates, x = y·exp(Y_𝔰)exp(Y_𝔯) in Γ\G
    Vector cs, cr;        // frame coordinates
    CellIndex cell;
    Matrix element;       // exp(Y_𝔰)exp(Y_𝔯), as found from the lattice
    double residual = 0;  // chart inversion residual
  };

  BoxCover(const Quotient& x, const Matrix& anchor, std::shared_ptr<const Decomposition> dec, double R, double kappa,
           double radius_s, double radius_r, double height_cap);

  const Matrix& anchor() const { return anchor_; }
  const Decomposition& decomposition() const { return *dec_; }
  std::shared_ptr<const Decomposition> decomposition_ptr() const { return dec_; }
  double R() const { return R_; }
  double kappa() const { return kappa_; }
  double width_s() const { return width_s_; }
  double width_r() const { return width_r_; }
  double radius_s() const { return radius_s_; }
  double radius_r() const { return radius_r_; }

  std::optional<Location> locate(const Matrix& x) const;
  // DomainError outside the chart.
  CellIndex cell_of(const Matrix& x) const;
  Matrix point(const Vector& ys, const Vector& yr) const;
  // Cells meeting the balls Ω_𝔰 and Ω_𝔯 (BudgetExhausted past `cap`).
  std::size_t s_cell_count(std::size_t cap = 100000000) const;
  std::size_t r_cell_count(std::size_t cap = 100000000) const;

 private:
  const Quotient* quotient_;
  Matrix anchor_, anchor_reduced_;
  std::shared_ptr<const Decomposition> dec_;
  double R_, kappa_, width_s_, width_r_, radius_s_, radius_r_;
};

// Number of cubes of side `width` on the integer grid meeting the ball of `radius` in ℝ^dim.
std::size_t cells_meeting_ball(std::size_t dim, double width, double radius, std::size_t cap = 100000000);

// κ = (4·A₇·dim 𝔤)⁻¹.
double default_box_exponent(const ConstantLedger& ledger, std::size_t dim_g);

// Index of the candidate with the most points within `radius` of it.
std::size_t pigeonhole_anchor(const std::vector<Matrix>& reduced_points, double radius, std::size_t candidates);

struct NearReturnOptions {
  double step = 0.05;
  std::size_t anchors = 8;
  double radius_s = 0.25;
  double radius_r = 0.25;
  std::size_t max_samples = 400000;
};

struct ReturnPair {
  double s = 0, t = 0;
  double size = 0;        // |g_st|
  double projective = 0;  // d(g_st·v̂_𝔰, v̂_𝔰)
  double residual = 0;    // ‖γ·xu_s − xu_t·g_st‖, relative
};

struct NearReturnSet {
  std::vector<std::pair<double, double>> intervals;  // 𝓔 as a union of quadrature intervals
  std::vector<std::pair<double, double>> excluded;   // cusp excursions beyond the height cap
  std::vector<ReturnPair> pairs;
  double measure = 0;
  double excluded_measure = 0;
  double threshold = 0;  // T^{1−1/A₇}
  double T = 0;
  double kappa = 0;
  std::size_t located = 0;
  std::size_t cell_population = 0;
  bool fired = false;
  std::string ledger_snapshot;

  std::string records() const;
};

// Samples t ∈ [0, T], bins xu_t into thin boxes around a pigeonholed anchor and
// tests the closing-lemma hypotheses on the fullest box. 𝔰 must not be an ideal.
NearReturnSet near_return_detector(const Quotient& x, const Matrix& g, const NilpotentDirection& u,
                                   const std::vector<RationalVector>& s, double T, const ConstantLedger& ledger,
                                   const NearReturnOptions& opt = {});

struct TransversalPair {
  Matrix x1, x2;  // x₂ = x₁·exp(r)
  Vector r;       // 𝔤-coordinates, r ∈ 𝔯
  Vector z1;      // 𝔰-perturbation applied to the first endpoint
  double norm = 0;
  double residual = 0;
};

struct PairSearchResult {
  std::optional<TransversalPair> pair;
  std::string diagnostic;
  std::size_t located = 0;
  std::size_t distinct_r_cells = 0;
  std::size_t candidates_tried = 0;
  double lower = 0, upper = 0;  // T^{−A₉}, T^{−1/A₉}
};

// Pigeonhole over 𝔯-cells for two generic points whose displacement is
// transversal to 𝔰, with the 𝔰-perturbation step. `generic` may be empty
// (all points eligible); `reflag` re-checks the perturbed endpoints.
PairSearchResult transversal_pair_search(const std::vector<Matrix>& points, const std::vector<char>& generic,
                                         const BoxCover& cover, double T, const ConstantLedger& ledger,
                                         const std::function<bool(const Matrix&)>& reflag = {},
                                         std::size_t max_candidates = 64);

}  // namespace orbitlab
