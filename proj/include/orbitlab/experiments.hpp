#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "orbitlab/diophantine.hpp"
#include "orbitlab/divergence.hpp"
#include "orbitlab/flow.hpp"
#include "orbitlab/io.hpp"
#include "orbitlab/ledger.hpp"

namespace orbitlab {

// Bracketed-array text for configuration values: "[1/2, 3]", "[[1, 0], [0, 1]]".
std::string vector_string(const RationalVector& v);
std::string vectors_string(const std::vector<RationalVector>& vs);
std::string matrix_string(const Matrix& m);
std::string rational_matrix_string(const RationalMatrix& m);
RationalVector parse_rational_vector(const std::string& raw);
std::vector<RationalVector> parse_rational_vectors(const std::string& raw);
Matrix parse_matrix(const std::string& raw);
RationalMatrix parse_rational_matrix(const std::string& raw);

// 𝔰𝔩₂-triple [h, z] = 2z, [h, f] = −2f, [z, f] = h inside a subalgebra.
struct Sl2Triple {
  RationalVector z, h, f;
};
// Searches small integral combinations of the span for a nilpotent z and
// completes it by linear algebra. Nothing when the span has no rational nilpotent.
std::optional<Sl2Triple> find_sl2_triple(const LieAlgebra& g, const std::vector<RationalVector>& span);

struct OrbitSpec {
  explicit OrbitSpec(Quotient q) : quotient(std::move(q)) {}

  Quotient quotient;
  long level = 1;
  Matrix g;                               // base representative
  std::optional<RationalMatrix> g_exact;  // when the base point is rational
  std::vector<RationalVector> h_algebra;  // Lie(H), exact
  std::vector<RationalVector> L;          // the stabilized subspace (flagship)
  // Letters of the sampling words. Nilpotent letters with an integral
  // exponential (after scaling by a small integer) also take integer times.
  std::vector<RationalVector> directions;
  RationalVector z;                       // nilpositive element of a triple in 𝔥
  std::string label;
};

struct Budgets {
  double T = 4;
  std::size_t samples = 20000;
  std::size_t invariance_samples = 1500;
  double step = 0.05;
  std::size_t word_length = 3;
  int lattice_step = 2;     // integer part of integral-unipotent letter times, |n| ≤ lattice_step
  double jitter = 0.25;     // continuous part of letter times
  double box_radius = 0.6;  // Ω_𝔰, Ω_𝔯 radii for the pair search
  std::size_t anchors = 8;
};

// [budgets] keys over `base`.
Budgets parse_budgets(const ConfigDoc& doc, Budgets base = {});

struct Scenario {
  explicit Scenario(OrbitSpec o) : orbit(std::move(o)) {}

  OrbitSpec orbit;
  Battery battery;
  ConstantLedger ledger;
  Budgets budgets;
  std::uint64_t seed = 1;
  std::string name;

  // scenario.lock text: everything needed to rebuild the scenario.
  ConfigDoc to_config() const;
  static Scenario from_config(const ConfigDoc& doc);
};

// Flagship construction: H = M_L(ℝ)⁺, the pointwise stabilizer of L in SO_Q, at g = 1.
Scenario scenario_so(const RationalMatrix& q, const std::vector<RationalVector>& L, long level, const Budgets& budgets,
                     std::uint64_t seed);
// SL₂(ℤ)\SL₂(ℝ) with a given subalgebra and base point.
Scenario scenario_sl2(const std::vector<RationalVector>& h_algebra, const Matrix& g, const Budgets& budgets,
                      std::uint64_t seed);
// Moves the base point by exp(ε·Y) with Y a seeded irrational unit vector of the
// orthogonal complement of 𝔥. The orbit then is dense for almost every draw.
Scenario with_transversal_offset(Scenario sc, double eps);
// Replaces H by the Borel span{h, z} of its triple and moves the base point
// along f inside H, so the base point stays on the closed H-orbit.
Scenario planted_borel(Scenario sc, double eps);
// Bumps at the base point and at seeded orbit samples.
Battery orbit_battery(const Scenario& sc, std::size_t count, double scale, int exponent = 4);

// Point 0 is the base point (empty word). Others: seeded words of one-parameter
// letters applied to g, reduced. Deterministic in the scenario seed.
// `h_elements` receives the words as elements of H (identity first).
std::vector<Matrix> sample_H_orbit(const Scenario& sc, std::size_t count, std::vector<Matrix>* h_elements = nullptr);

// Smallest subalgebra containing 𝔰 and Z, computed numerically with a rank
// tolerance and rationalized. `exact` reports whether rationalization succeeded.
std::vector<RationalVector> numeric_lie_closure(const LieAlgebra& g, const std::vector<RationalVector>& s,
                                                const Vector& Z, double tol, bool* exact);

struct ChainStep {
  std::size_t dim = 0;
  double eps_hat = 0;      // almost invariance of the sample under 𝔰
  double eps_found = 0;    // under the found direction, when there is one
  double pair_norm = 0;
  Vector direction;        // the found r, empty when the chain stops
  std::string diagnostic;
  std::vector<RationalVector> basis;
};

struct ChainReport {
  std::vector<ChainStep> steps;
  std::size_t dim_g = 0;
  bool reached_full = false;
  std::string stop;

  std::vector<std::size_t> dims() const;
  // Chain dimensions and stop reason only: the golden-file content.
  std::string summary() const;
  std::string records() const;
};

ChainReport accumulate_invariance(const Scenario& sc);

struct RateRow {
  std::size_t orbit_id = 0;
  std::string label;
  double proxy = 0;
  double theta = 0;
  double mean_abs_disc = 0;
  double stderr_ = 0;
};

struct RateReport {
  std::vector<RateRow> rows;  // sorted by proxy
  std::optional<double> slope, slope_low, slope_high;
  double spearman = 0;
  std::string method;

  std::string csv() const;
  std::string records() const;
};

double spearman(const std::vector<double>& a, const std::vector<double>& b);

// Least squares of log y on log x: slope and a 95% band.
struct PowerFit {
  double slope = 0, intercept = 0, low = 0, high = 0;
};
PowerFit power_law_fit(const std::vector<double>& x, const std::vector<double>& y);

// SO(2,2) for Q = diag(1,1,−1,−1) as (SL₂ × SL₂)/±1, acting on M₂(ℝ) by M ↦ A M Bᵀ
// through (x₁..x₄) ↦ [[x₁+x₃, x₂+x₄], [x₄−x₂, x₁−x₃]].
Matrix split_form_embedding(const Matrix& a, const Matrix& b);
RationalMatrix split_form_embedding(const RationalMatrix& a, const RationalMatrix& b);
bool is_split_form(const RationalMatrix& q);
// For v with Q(v) > 0 the stabilizer is {(A, C A C⁻¹)} with C primitive integral.
RationalMatrix hecke_twist(const RationalVector& v);
// Left coset representatives of SL₂(ℤ) in the primitive integral matrices of determinant n.
std::vector<RationalMatrix> hecke_representatives(long n);

struct EquidistributionOptions {
  Battery first, second;  // split-form method: product bumps f ⊗ f′
  std::size_t samples = 200000;
  std::size_t walk_reference_steps = 200000;
};
// Default split-form batteries: seeded bumps with embedded supports.
EquidistributionOptions default_equidistribution_options(std::uint64_t seed, std::size_t per_factor = 8);

RateReport equidistribution_experiment(const std::vector<std::vector<RationalVector>>& family, const Scenario& templ,
                                       const EquidistributionOptions& opt);

struct DichotomyRow {
  std::string point;
  std::string s_label;
  double T = 0;
  bool fired = false;
  double measure = 0, threshold = 0;
  double theta = 0;  // +∞ when no family member is intermediate
  std::string intermediate;
  bool diophantine = true;
  std::string error;  // precondition violation, empty when the row ran
};

struct DichotomyReport {
  std::vector<DichotomyRow> rows;
  std::string records() const;
};

// θ over the members containing Ad(g)𝔥, for a real base point.
ThetaResult numeric_theta(const LieAlgebra& g, const std::vector<RationalVector>& h_algebra, const Matrix& point,
                          const SubgroupFamily& family, double tol = 1e-9);

DichotomyReport closing_lemma_experiment(const Scenario& sc,
                                         const std::vector<std::pair<std::string, std::vector<RationalVector>>>& s_choices,
                                         const std::vector<double>& T_grid,
                                         const std::vector<std::pair<std::string, Matrix>>& base_points,
                                         const SubgroupFamily& family, double eta);

}  // namespace orbitlab
