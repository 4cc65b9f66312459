#pragma once

// Brute-force oracles kept independent of the library's reduction/enumeration path.

#include <cmath>
#include <functional>

#include "orbitlab/diophantine.hpp"
#include "orbitlab/rational.hpp"

namespace oracle {

using namespace orbitlab;

// Pairwise reduction: b_i -= q b_j whenever that shortens b_i. Returns the new Gram.
inline RationalMatrix pairwise_reduce(RationalMatrix gram) {
  const std::size_t n = gram.rows();
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        Rational r = gram(i, j) / gram(j, j);
        mpz_class q;
        mpz_fdiv_q(q.get_mpz_t(), mpz_class(r.get_num() * 2 + r.get_den()).get_mpz_t(),
                   mpz_class(r.get_den() * 2).get_mpz_t());
        if (q == 0) continue;
        Rational qq(q);
        Rational next = gram(i, i) - 2 * qq * gram(i, j) + qq * qq * gram(j, j);
        if (next >= gram(i, i)) continue;
        // Row/column operation for b_i -> b_i - q b_j.
        for (std::size_t k = 0; k < n; ++k)
          if (k != i) {
            gram(i, k) -= qq * gram(j, k);
            gram(k, i) = gram(i, k);
          }
        gram(i, i) = next;
        changed = true;
      }
  }
  return gram;
}

// Number of coefficient vectors the exhaustive search below would visit.
inline double box_size(const RationalMatrix& gram) {
  const std::size_t n = gram.rows();
  double best = gram(0, 0).get_d();
  for (std::size_t i = 1; i < n; ++i) best = std::min(best, gram(i, i).get_d());
  RationalMatrix inv = inverse(gram);
  double out = 1;
  for (std::size_t i = 0; i < n; ++i) out *= 2 * std::floor(std::sqrt(best * inv(i, i).get_d()) + 1e-9) + 1;
  return out;
}

// Exhaustive λ₁² of the lattice with exact Gram matrix G: every coefficient
// vector inside the box |c_i| ≤ r·sqrt((G⁻¹)_ii), r² = min_i G_ii, is tried.
inline Rational shortest_norm_sq(const RationalMatrix& gram) {
  const std::size_t n = gram.rows();
  Rational best = gram(0, 0);
  for (std::size_t i = 1; i < n; ++i)
    if (gram(i, i) < best) best = gram(i, i);
  RationalMatrix inv = inverse(gram);
  std::vector<long> bound(n);
  for (std::size_t i = 0; i < n; ++i)
    bound[i] = static_cast<long>(std::floor(std::sqrt(best.get_d() * inv(i, i).get_d()) + 1e-9));
  std::vector<long> c(n);
  std::function<void(std::size_t)> rec = [&](std::size_t i) {
    if (i == n) {
      bool nonzero = false;
      for (long x : c) nonzero |= x != 0;
      if (!nonzero) return;
      Rational s = 0;
      for (std::size_t a = 0; a < n; ++a)
        if (c[a] != 0)
          for (std::size_t b = 0; b < n; ++b)
            if (c[b] != 0) s += gram(a, b) * Rational(c[a] * c[b]);
      if (s < best) best = s;
      return;
    }
    for (long v = -bound[i]; v <= bound[i]; ++v) {
      c[i] = v;
      rec(i + 1);
    }
  };
  rec(0);
  return best;
}

// Full-family Diophantine scan from QR volumes of transported basis vectors,
// independent of the library's wedge-space evaluator.
class DiophantineScan {
 public:
  explicit DiophantineScan(const SubgroupFamily& fam) : alg_(fam.algebra) {
    for (const auto& m : fam.members) {
      auto basis = span_basis(m.subgroup.algebra);
      // v_M = c · (b₁ ∧ … ∧ b_k).
      WedgeVector raw = wedge(basis, alg_->dim());
      const auto& [s, val] = *m.wedge.coords().begin();
      Member p;
      p.scale = std::abs(Rational(val / raw.coefficient(s)).get_d());
      for (const auto& b : basis) p.basis.push_back(alg_->element(to_double(b)));
      members_.push_back(std::move(p));
    }
  }

  std::vector<std::size_t> witnesses(const Matrix& g, const Vector& z, double eta, double T,
                                     const ConstantLedger& ledger) const {
    const Matrix ginv = g.inverse();
    const Vector zhat = z / alg_->norm(z);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < members_.size(); ++i) {
      const auto& m = members_[i];
      std::vector<Vector> w;
      for (const auto& b : m.basis) w.push_back(alg_->coordinates(Matrix(ginv * b * g)));
      double en = m.scale * std::sqrt(gram_det(w));
      if (!(en < T)) continue;
      w.insert(w.begin(), zhat);
      double tr = m.scale * std::sqrt(gram_det(w));
      if (tr < psi(en, eta, ledger)) out.push_back(i);
    }
    return out;
  }

 private:
  struct Member {
    double scale = 1;
    std::vector<Matrix> basis;
  };

  // ‖w₁ ∧ … ∧ w_k‖² in 𝔤 coordinates, as the squared product of the R diagonal of a
  // Householder QR in orthonormal coordinates (a Gram determinant loses half the digits).
  double gram_det(const std::vector<Vector>& w) const {
    Eigen::LLT<Matrix> llt(alg_->gram_double());
    Matrix m(alg_->dim(), w.size());
    for (std::size_t i = 0; i < w.size(); ++i) m.col(i) = llt.matrixU() * w[i];
    Matrix r = Eigen::HouseholderQR<Matrix>(m).matrixQR().triangularView<Eigen::Upper>();
    double out = 1;
    for (std::size_t i = 0; i < w.size(); ++i) out *= r(i, i) * r(i, i);
    return out;
  }

  AlgebraPtr alg_;
  std::vector<Member> members_;
};

}  // namespace oracle
