#pragma once

#include <cstddef>
#include <vector>

#include "orbitlab/rational.hpp"

namespace orbitlab {

// Lattices are handled through their Gram matrices; bases are implicit.
// A transform T maps the input basis to the reduced one: b'_i = Σ_j T_ij b_j.

// LLL with Lovász parameter 3/4 on exact Gram data. Returns the reduced Gram.
RationalMatrix lll_gram(const RationalMatrix& gram, RationalMatrix* transform);
// Floating variant, Lovász parameter 0.99. Transform entries are integers stored in doubles.
Eigen::MatrixXd lll_gram(const Eigen::MatrixXd& gram, Eigen::MatrixXd* transform);

struct ShortVectorSearch {
  RationalVector coefficients;  // integer coefficients on the input basis
  double norm_sq = 0;           // squared length of the shortest vector found
  bool certified = false;       // enumeration finished within budget
  double lower_sq = 0;          // valid lower bound for λ₁² even when uncertified
  double upper_sq = 0;
  std::size_t nodes = 0;
  bool exact = false;           // exact_norm_sq is valid (exact-input variant)
  Rational exact_norm_sq;
};

constexpr std::size_t kDefaultNodeBudget = 20'000'000;

// Reduction then Fincke–Pohst enumeration below the shortest reduced basis vector.
ShortVectorSearch shortest_vector(const Eigen::MatrixXd& gram, std::size_t node_budget = kDefaultNodeBudget);
// Same, starting from explicit basis vectors (columns) in an orthonormal frame.
ShortVectorSearch shortest_vector_basis(const Eigen::MatrixXd& basis_cols,
                                        std::size_t node_budget = kDefaultNodeBudget);
// Floating LLL on basis columns in place; returns the reduced Gram matrix.
Eigen::MatrixXd lll_basis(Eigen::MatrixXd& basis_cols, Eigen::MatrixXd* transform);
// Exact variant: exact LLL, enumeration with a safety margin, exact comparison of candidates.
ShortVectorSearch shortest_vector(const RationalMatrix& gram, std::size_t node_budget = kDefaultNodeBudget);

// All nonzero coefficient vectors x with xᵀ G x ≤ radius_sq (one of each ±x pair).
// `complete` is set to false when the node budget runs out.
std::vector<RationalVector> enumerate_short_vectors(const Eigen::MatrixXd& gram, double radius_sq,
                                                    std::size_t node_budget, bool* complete);

}  // namespace orbitlab
