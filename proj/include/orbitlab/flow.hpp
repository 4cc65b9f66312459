#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "orbitlab/cusp.hpp"

namespace orbitlab {

// (1 − ρ²)^exponent on [0, 1), zero beyond: class C^{exponent−1}.
double bump_profile(double rho, int exponent);

// Bump around a reduced base point. Evaluation reduces its argument in
// SL_N(ℤ)\SL_N(ℝ) first, so the function is invariant under any Γ ⊂ SL_N(ℤ).
struct TestFunction {
  Matrix center;   // base point as given (an element of G)
  Matrix reduced;  // its SL_N(ℤ)-reduced representative
  double scale = 0.5;
  int exponent = 6;
  int weight_degree = 1;

  std::string descriptor() const;
};

TestFunction make_test_function(const Matrix& center, double scale, int exponent = 6, int weight_degree = 1);
// Reduction used by the test functions (Gauss for N = 2, row LLL otherwise).
Matrix reduce_point(const Matrix& g);
double evaluate(const TestFunction& f, const Matrix& g);

using Battery = std::vector<TestFunction>;
std::string battery_hash(const Battery& battery);

// Matrix logarithm of A ∈ SL₂(ℝ) near the identity, in closed form.
Eigen::Matrix2d log_sl2(const Eigen::Matrix2d& a);

// Evaluates a battery along x₀u_t. Orbit points come from the cached u_t
// polynomial; the previous reduction is reused as the starting point of the next.
class OrbitEvaluator {
 public:
  OrbitEvaluator(const Matrix& x0, const NilpotentDirection& u, const Battery& battery);
  void values(double t, double* out);
  Matrix point(double t) const;
  std::size_t size() const { return battery_.size(); }

 private:
  Matrix x0_;
  const NilpotentDirection* u_;
  Battery battery_;
  bool fast2_ = false;
  Eigen::Matrix2d x02_, z2_, gamma2_;
  std::vector<Eigen::Matrix2d> centers2_, centers2_inv_;
  Matrix gamma_;
};

struct QuadratureResult {
  double value = 0;
  double error = 0;  // |S_h − S_{2h}|, Simpson on the same nodes
};
// Normalized integral (1/(b−a))∫_a^b f for each component of a vector-valued f.
std::vector<QuadratureResult> window_average(const std::function<void(double, double*)>& f, std::size_t components,
                                             double a, double b, double step);
QuadratureResult window_average(const std::function<double(double)>& f, double a, double b, double step);

std::pair<double, double> window_bounds(long n, double K);

QuadratureResult birkhoff_window_average(const Matrix& x0, const NilpotentDirection& u, const TestFunction& f, long n,
                                         double K, double step);
double discrepancy(const Matrix& x0, const NilpotentDirection& u, const TestFunction& f, long n, double K, double step,
                   double reference_value);

struct ReferenceValue {
  double value = 0;
  double error = 0;
  std::string method;
};

// ∫ f dμ on SL₂(ℤ)\SL₂(ℝ): quadrature of the profile against the Haar density
// in the exponential chart at the center, divided by the volume of the quotient.
// Requires the support ball to embed (checked).
ReferenceValue reference_sl2(const Quotient& x, const TestFunction& f);
// Long right random walk g ← g·exp(Y), Y uniform in a ball, after a burn-in.
// Haar measure is stationary for it. Error is a batch-means standard error.
std::vector<ReferenceValue> reference_mixing(const Quotient& x, const Battery& battery, const Matrix& start,
                                             std::size_t steps, std::size_t burn_in, double step_radius,
                                             std::uint64_t seed);

// det((1 − e^{−ad Y})/ad Y), the Haar density in exponential coordinates.
double haar_jacobian(const LieAlgebra& g, const Vector& coords);
// Smallest d(γc, c) over γ ∉ {±1} in a box of integral matrices; the ball
// of radius r around c embeds when this exceeds 2r.
double self_distance(const Matrix& c, int box = 3);

// Haar-distributed point of SL₂(ℤ)\SL₂(ℝ) from the standard fundamental domain.
Matrix sample_haar_sl2(std::mt19937_64& rng);
// diag(√y, 1/√y): the closed horocycle at height y, period 1/y.
Matrix closed_horocycle_point(double height);

struct WindowRecord {
  long n = 0;
  double lo = 0, hi = 0;
  double average = 0;
  double discrepancy = 0;
  double error = 0;
};

struct DiscrepancyReport {
  std::vector<WindowRecord> windows;
  double reference_value = 0;
  std::string reference_method;
  double K = 0;
  double step = 0;
  double error = 0;  // largest window error estimate

  // One window per line: n, bounds, average, D_n, error estimate.
  std::string records() const;
};

DiscrepancyReport discrepancy_report(const Matrix& x0, const NilpotentDirection& u, const TestFunction& f, long k1,
                                     long k2, double K, double step, const ReferenceValue& reference);

// D_n(f_j) for n ∈ [k1, k2] and every battery member, from one pass over the orbit.
struct DiscrepancyTable {
  long k1 = 0, k2 = 0;
  Matrix values;  // (n − k1, j)
  Matrix errors;
};
DiscrepancyTable discrepancy_table(const Matrix& x0, const NilpotentDirection& u, const Battery& battery,
                                   const std::vector<double>& references, long k1, long k2, double K, double step);

struct SobolevOptions {
  std::size_t samples = 1500;
  std::uint64_t seed = 1;
  double fd_fraction = 0.01;  // finite-difference step as a fraction of the scale
};
// S_d(f)² = Σ_𝒟 ‖(ht + 1)^d 𝒟f‖², monomials 𝒟 of degree ≤ d in an orthonormal
// basis, by Monte Carlo over the support with nested central differences.
// L² is taken for Haar measure normalized by orthonormal Lebesgue measure on 𝔤.
double sobolev_surrogate(const Quotient& x, const TestFunction& f, int d, const SobolevOptions& opt = {});

struct GenericityCertificate {
  long k1 = 0, k2 = 0;
  bool passed = true;
  double margin = 0;  // min over n, f of tolerance·S_d(f)/n − |D_n(f)|
  std::string battery_hash;
  std::string scope;
};

GenericityCertificate certify(const DiscrepancyTable& table, const std::vector<double>& sobolev, double tolerance,
                              const std::string& hash);
GenericityCertificate is_generic(const Matrix& x0, const NilpotentDirection& u, const Battery& battery,
                                 const std::vector<double>& sobolev, const std::vector<double>& references, long k1,
                                 long k2, double K, double step, double tolerance = 1.0);

struct FlowSample {
  Matrix x;
  double t = 0;
  Vector Z;  // coordinates in 𝔤
};
// Fraction of samples whose point x·u_t·exp(Z) fails [k1, k2]-genericity.
double generic_fraction(const LieAlgebra& g, const std::vector<FlowSample>& samples, const NilpotentDirection& u,
                        const Battery& battery, const std::vector<double>& sobolev,
                        const std::vector<double>& references, long k1, long k2, double K, double step,
                        double tolerance = 1.0);

struct WeightedPoint {
  Matrix g;
  double weight = 1;
};
// ε̂ = max_f |μ^m(f) − μ(f)| / S_d(f) for a group element m.
double almost_invariance(const std::vector<WeightedPoint>& sample, const Matrix& mover, const Battery& battery,
                         const std::vector<double>& sobolev);
// Algebra-element variant: movers exp(tZ), t ∈ {±1/2, ±1, ±2}.
double almost_invariance(const LieAlgebra& g, const std::vector<WeightedPoint>& sample, const Vector& Z,
                         const Battery& battery, const std::vector<double>& sobolev);

}  // namespace orbitlab
