#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "orbitlab/exterior.hpp"
#include "orbitlab/ledger.hpp"

namespace orbitlab {

// ψ_η(s) = C₄⁻¹ s^{−A₄} η^{A₄}.
double psi(double s, double eta, const ConstantLedger& ledger);
// ψ_η(s) ≤ C₃⁻¹ s^{−A₃} η^{A₃} at every grid point.
bool psi_within_avoidance_bound(double eta, const ConstantLedger& ledger, const std::vector<double>& grid);

enum class FamilyKind { Stabilizers, NormalFactors, Custom };
std::string to_string(FamilyKind kind);

struct FamilyMember {
  SubgroupData subgroup;
  std::optional<RationalVector> vector;  // v for a stabilizer M_v
  WedgeVector wedge;                     // v_M
  double height = 0;                     // ‖v_M‖
};

struct SubgroupFamily {
  AlgebraPtr algebra;
  FamilyKind kind = FamilyKind::Custom;
  double norm_bound = 0;                   // stabilizers: ‖v‖ ≤ norm_bound
  std::vector<RationalVector> constraint;  // stabilizers: v ∈ span(constraint) when nonempty
  std::vector<FamilyMember> members;

  std::size_t size() const { return members.size(); }
  // One member per line: label, dimension, height, hash of v_M.
  std::string records() const;
};

FamilyMember make_member(const LieAlgebra& g, SubgroupData m, std::optional<RationalVector> v = std::nullopt);

// Lie(M_B) = {X ∈ 𝔰𝔬_Q : Xv = 0 for v ∈ B}, exact.
SubgroupData pointwise_stabilizer(const LieAlgebra& so, const std::vector<RationalVector>& vectors);

// All M_v for primitive integral v with ‖v‖ ≤ norm_bound, Q(v) ≠ 0, v ∈ span(constraint)
// when a constraint is given; v and −v are identified. Empty result is a DomainError.
SubgroupFamily enumerate_stabilizers(const AlgebraPtr& so, const RationalMatrix& q, double norm_bound,
                                     const std::vector<RationalVector>& constraint = {});
// Proper minimal ideals of 𝔤 found among ideals generated by basis vectors and
// their sums and differences. Intended for small examples such as 𝔰𝔩₂ ⊕ 𝔰𝔩₂.
SubgroupFamily normal_factors(const AlgebraPtr& g);
SubgroupFamily custom_family(const AlgebraPtr& g, std::vector<SubgroupData> members);

struct DiophantineWitness {
  std::size_t member = 0;
  std::string label;
  double eta_norm = 0;     // ‖η_M(g)‖
  double transversal = 0;  // ‖ẑ ∧ η_M(g)‖
  double threshold = 0;    // ψ(‖η_M(g)‖)
};

struct DiophantineReport {
  bool verdict = true;
  std::vector<DiophantineWitness> witnesses;
  double T = 0;
  double eta = 0;
  std::size_t scanned = 0;
  std::string scope;  // the verdict is relative to the scanned family only
};

DiophantineReport is_diophantine(const Matrix& g, const Vector& z, double eta, double T,
                                 const SubgroupFamily& family, const ConstantLedger& ledger);

// Exact Ad(g)𝔥 ⊆ Lie(M).
bool is_intermediate(const LieAlgebra& alg, const std::vector<RationalVector>& h_algebra, const RationalMatrix& g,
                     const SubgroupData& m);

struct ThetaResult {
  double value = std::numeric_limits<double>::infinity();
  std::optional<std::size_t> member;
};
// inf of disc(M, g) over intermediate members.
ThetaResult theta(const std::vector<RationalVector>& h_algebra, const RationalMatrix& g, const SubgroupFamily& family);

// Shortest nonzero integral vector length (Euclidean) in the rational span of
// L. When q is given, Q|_L must be positive definite.
double min_vector_proxy(const std::vector<RationalVector>& L, const RationalMatrix* q = nullptr);

struct ExhaustivenessViolation {
  double T = 0;
  std::size_t reference_member = 0;
  double reference_height = 0;
  double best_candidate_height = std::numeric_limits<double>::infinity();
};

struct ExhaustivenessReport {
  bool passed = true;
  std::size_t checked = 0;  // (T, reference member) pairs tested
  std::vector<ExhaustivenessViolation> violations;
};

// For each T and each reference member containing M with height ≤ T, asks for
// a candidate member containing M with height ≤ C·T^A.
ExhaustivenessReport exhaustiveness_check(const SubgroupFamily& reference, const SubgroupFamily& candidate,
                                          const SubgroupData& m, double A, double C,
                                          const std::vector<double>& T_grid);

// Exponent from a least-squares fit of log(best candidate height) against
// log(reference height), and the smallest C that makes every pair pass.
struct ExhaustivenessFit {
  double A = 1;
  double C = 1;
  std::size_t pairs = 0;
  bool complete = true;  // every reference member containing M has some candidate
};
ExhaustivenessFit fit_exhaustiveness(const SubgroupFamily& reference, const SubgroupFamily& candidate,
                                     const SubgroupData& m);

// Lie(M) ⊇ Lie(M'), exact.
bool contains_subgroup(const LieAlgebra& g, const SubgroupData& big, const SubgroupData& small);

}  // namespace orbitlab
