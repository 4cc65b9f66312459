#pragma once

// Seeded generators shared by the property tests.

#include <random>

#include "orbitlab/algebra.hpp"

namespace gen {

using namespace orbitlab;

inline Rational small_rational(std::mt19937_64& rng, int num = 9, int den = 5) {
  std::uniform_int_distribution<int> n(-num, num), d(1, den);
  Rational q(n(rng), d(rng));
  q.canonicalize();
  return q;
}

inline RationalVector rational_vector(std::mt19937_64& rng, std::size_t m, int num = 9, int den = 5) {
  RationalVector v(m);
  for (auto& x : v) x = small_rational(rng, num, den);
  return v;
}

inline RationalVector integer_vector(std::mt19937_64& rng, std::size_t m, int bound) {
  std::uniform_int_distribution<int> d(-bound, bound);
  RationalVector v(m);
  for (auto& x : v) x = d(rng);
  return v;
}

// Random word in elementary matrices: an element of SL_n(ℤ).
inline RationalMatrix sl_integral(std::mt19937_64& rng, std::size_t n, int steps = 6, int mult = 2) {
  RationalMatrix g = RationalMatrix::identity(n);
  std::uniform_int_distribution<std::size_t> idx(0, n - 1);
  std::uniform_int_distribution<int> m(-mult, mult);
  for (int s = 0; s < steps; ++s) {
    std::size_t i = idx(rng), j = idx(rng);
    if (i == j) continue;
    RationalMatrix e = RationalMatrix::identity(n);
    e(i, j) = m(rng);
    g = e * g;
  }
  return g;
}

// Random element of SL_n(ℚ): unipotent times diagonal times unipotent.
inline RationalMatrix sl_rational(std::mt19937_64& rng, std::size_t n) {
  RationalMatrix lower = RationalMatrix::identity(n), upper = RationalMatrix::identity(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i > j) lower(i, j) = small_rational(rng, 3, 3);
      if (i < j) upper(i, j) = small_rational(rng, 3, 3);
    }
  RationalVector d(n, Rational(1));
  std::uniform_int_distribution<int> p(1, 3);
  Rational prod = 1;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    d[i] = Rational(p(rng), p(rng));
    d[i].canonicalize();
    prod *= d[i];
  }
  d[n - 1] = 1 / prod;
  return lower * RationalMatrix::diagonal(d) * upper;
}

// Nilpotent elements with coefficients in {-1,0,1} (basis only when dim > 8).
inline std::vector<RationalMatrix> small_nilpotents(const LieAlgebra& g) {
  std::vector<RationalMatrix> out;
  const std::size_t m = g.dim();
  if (m > 8) {
    for (const auto& b : g.basis())
      if (is_nilpotent(b)) out.push_back(b);
    return out;
  }
  std::vector<int> c(m, -1);
  while (true) {
    RationalVector v(m);
    bool nonzero = false;
    for (std::size_t i = 0; i < m; ++i) {
      v[i] = c[i];
      nonzero |= c[i] != 0;
    }
    if (nonzero) {
      RationalMatrix x = g.element(v);
      if (is_nilpotent(x)) out.push_back(x);
    }
    std::size_t i = 0;
    while (i < m && c[i] == 1) c[i++] = -1;
    if (i == m) break;
    ++c[i];
  }
  return out;
}

// Product of exponentials of rational multiples of small nilpotent elements.
inline RationalMatrix group_word(std::mt19937_64& rng, const std::vector<RationalMatrix>& nilpotents,
                                 int steps = 4) {
  RationalMatrix x = RationalMatrix::identity(nilpotents.at(0).rows());
  std::uniform_int_distribution<std::size_t> idx(0, nilpotents.size() - 1);
  for (int s = 0; s < steps; ++s) x = x * exp_nilpotent(nilpotents[idx(rng)] * small_rational(rng, 3, 2));
  return x;
}

}  // namespace gen
