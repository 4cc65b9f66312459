#include "orbitlab/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "orbitlab/errors.hpp"

namespace orbitlab {

namespace {

template <class S>
struct Scalar;

template <>
struct Scalar<double> {
  static double round(double x) { return std::floor(x + 0.5); }
  static double delta() { return 0.99; }
  static bool positive(double x) { return x > 0; }
};

template <>
struct Scalar<Rational> {
  static Rational round(const Rational& q) {
    Integer f;
    Integer num = 2 * q.get_num() + q.get_den();
    Integer den = 2 * q.get_den();
    mpz_fdiv_q(f.get_mpz_t(), num.get_mpz_t(), den.get_mpz_t());
    return Rational(f);
  }
  static Rational delta() { return Rational(3, 4); }
  static bool positive(const Rational& q) { return sgn(q) > 0; }
};

template <class S>
using Table = std::vector<std::vector<S>>;

template <class S>
void lll_impl(Table<S>& G, Table<S>& T) {
  const std::size_t n = G.size();
  T.assign(n, std::vector<S>(n, S(0)));
  for (std::size_t i = 0; i < n; ++i) T[i][i] = S(1);
  if (n < 2) return;
  Table<S> mu(n, std::vector<S>(n, S(0)));
  std::vector<S> B(n);

  auto gso = [&] {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        S s = G[i][j];
        for (std::size_t k = 0; k < j; ++k) s -= mu[j][k] * mu[i][k] * B[k];
        mu[i][j] = s / B[j];
      }
      S b = G[i][i];
      for (std::size_t k = 0; k < i; ++k) b -= mu[i][k] * mu[i][k] * B[k];
      if (!Scalar<S>::positive(b)) throw DomainError("lattice Gram matrix is not positive definite");
      B[i] = b;
    }
  };

  auto size_reduce = [&](std::size_t k, std::size_t j) {
    S q = Scalar<S>::round(mu[k][j]);
    if (q == S(0)) return;
    S gkj = G[k][j];
    S newkk = G[k][k] - S(2) * q * gkj + q * q * G[j][j];
    for (std::size_t i = 0; i < n; ++i) {
      if (i == k) continue;
      G[k][i] -= q * G[j][i];
      G[i][k] = G[k][i];
    }
    G[k][k] = newkk;
    for (std::size_t i = 0; i < n; ++i) T[k][i] -= q * T[j][i];
    for (std::size_t i = 0; i < j; ++i) mu[k][i] -= q * mu[j][i];
    mu[k][j] -= q;
  };

  gso();
  std::size_t k = 1;
  std::size_t guard = 0;
  const S delta = Scalar<S>::delta();
  while (k < n) {
    if (++guard > 1000000) throw DomainError("lattice reduction did not terminate");
    for (std::size_t j = k; j-- > 0;) size_reduce(k, j);
    if (B[k] >= (delta - mu[k][k - 1] * mu[k][k - 1]) * B[k - 1]) {
      ++k;
    } else {
      std::swap(G[k], G[k - 1]);
      for (auto& row : G) std::swap(row[k], row[k - 1]);
      std::swap(T[k], T[k - 1]);
      gso();
      k = std::max<std::size_t>(k - 1, 1);
    }
  }
}

// Floating LLL on explicit basis vectors (columns of b). Working with the
// vectors instead of an incrementally updated Gram matrix avoids the
// cancellation that ruins the Gram entries on skewed lattices.
void lll_vectors(Eigen::MatrixXd& b, Eigen::MatrixXd& t) {
  const Eigen::Index n = b.cols();
  t = Eigen::MatrixXd::Identity(n, n);
  if (n < 2) return;
  Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd bn(n);
  Eigen::MatrixXd star(b.rows(), n);
  auto gso = [&] {
    for (Eigen::Index i = 0; i < n; ++i) {
      star.col(i) = b.col(i);
      for (Eigen::Index j = 0; j < i; ++j) {
        mu(i, j) = b.col(i).dot(star.col(j)) / bn[j];
        star.col(i) -= mu(i, j) * star.col(j);
      }
      bn[i] = star.col(i).squaredNorm();
      if (!(bn[i] > 0)) throw DomainError("lattice basis is degenerate");
    }
  };
  gso();
  Eigen::Index k = 1;
  std::size_t guard = 0;
  while (k < n) {
    if (++guard > 1000000) throw DomainError("lattice reduction did not terminate");
    bool again = true;
    for (int pass = 0; again && pass < 50; ++pass) {
      again = false;
      for (Eigen::Index j = k - 1; j >= 0; --j) {
        double q = std::round(mu(k, j));
        if (q == 0) continue;
        b.col(k) -= q * b.col(j);
        t.row(k) -= q * t.row(j);
        for (Eigen::Index i = 0; i < j; ++i) mu(k, i) -= q * mu(j, i);
        mu(k, j) -= q;
        again = true;
      }
      if (again) {
        gso();
        again = false;
        for (Eigen::Index j = 0; j < k; ++j) again = again || std::abs(mu(k, j)) > 0.51;
      }
    }
    if (bn[k] >= (0.99 - mu(k, k - 1) * mu(k, k - 1)) * bn[k - 1]) {
      ++k;
    } else {
      b.col(k).swap(b.col(k - 1));
      t.row(k).swap(t.row(k - 1));
      gso();
      k = std::max<Eigen::Index>(k - 1, 1);
    }
  }
}

// Cholesky factor R (upper) with G = RᵀR.
Eigen::MatrixXd cholesky_upper(const Eigen::MatrixXd& g) {
  Eigen::LLT<Eigen::MatrixXd> llt(g);
  if (llt.info() != Eigen::Success) throw DomainError("lattice Gram matrix is not positive definite");
  return llt.matrixU();
}

// Enumerate x with xᵀGx ≤ radius_sq, highest nonzero coordinate positive.
std::size_t fincke_pohst(const Eigen::MatrixXd& gram, double radius_sq, std::size_t budget,
                         const std::function<void(const std::vector<long long>&, double)>& visit,
                         bool* complete) {
  const int n = static_cast<int>(gram.rows());
  Eigen::MatrixXd R = cholesky_upper(gram);
  std::vector<long long> x(n, 0);
  std::size_t nodes = 0;
  bool ok = true;
  std::function<void(int, double, bool)> rec = [&](int i, double used, bool higher_zero) {
    if (!ok) return;
    if (i < 0) {
      if (!higher_zero) visit(x, used);
      return;
    }
    double c = 0;
    for (int j = i + 1; j < n; ++j) c -= R(i, j) * static_cast<double>(x[j]);
    c /= R(i, i);
    double rem = radius_sq - used;
    if (rem < 0) return;
    double w = std::sqrt(rem) / R(i, i);
    long long lo = static_cast<long long>(std::ceil(c - w - 1e-12));
    long long hi = static_cast<long long>(std::floor(c + w + 1e-12));
    if (higher_zero) lo = std::max<long long>(lo, 0);
    for (long long v = lo; v <= hi; ++v) {
      if (++nodes > budget) {
        ok = false;
        return;
      }
      double d = R(i, i) * (static_cast<double>(v) - c);
      double next = used + d * d;
      if (next > radius_sq * (1 + 1e-12) + 1e-300) continue;
      x[i] = v;
      rec(i - 1, next, higher_zero && v == 0);
      x[i] = 0;
      if (!ok) return;
    }
  };
  rec(n - 1, 0.0, true);
  if (complete) *complete = ok;
  return nodes;
}

RationalVector back_transform(const std::vector<long long>& x, const Eigen::MatrixXd& T) {
  const std::size_t n = x.size();
  RationalVector c(n, Rational(0));
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] == 0) continue;
    for (std::size_t j = 0; j < n; ++j) c[j] += Rational(static_cast<long>(x[i])) * Rational(T(i, j));
  }
  return c;
}

RationalVector back_transform(const std::vector<long long>& x, const RationalMatrix& T) {
  const std::size_t n = x.size();
  RationalVector c(n, Rational(0));
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] == 0) continue;
    for (std::size_t j = 0; j < n; ++j) c[j] += Rational(static_cast<long>(x[i])) * T(i, j);
  }
  return c;
}

double gso_min(const Eigen::MatrixXd& reduced) {
  Eigen::MatrixXd R = cholesky_upper(reduced);
  double m = std::numeric_limits<double>::infinity();
  for (int i = 0; i < R.rows(); ++i) m = std::min(m, R(i, i) * R(i, i));
  return m;
}

}  // namespace

RationalMatrix lll_gram(const RationalMatrix& gram, RationalMatrix* transform) {
  const std::size_t n = gram.rows();
  Table<Rational> G(n, std::vector<Rational>(n)), T;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) G[i][j] = gram(i, j);
  lll_impl(G, T);
  RationalMatrix out(n, n);
  if (transform) *transform = RationalMatrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      out(i, j) = G[i][j];
      if (transform) (*transform)(i, j) = T[i][j];
    }
  return out;
}

Eigen::MatrixXd lll_gram(const Eigen::MatrixXd& gram, Eigen::MatrixXd* transform) {
  Eigen::MatrixXd b = cholesky_upper(gram);
  Eigen::MatrixXd t;
  lll_vectors(b, t);
  if (transform) *transform = t;
  return b.transpose() * b;
}

Eigen::MatrixXd lll_basis(Eigen::MatrixXd& basis_cols, Eigen::MatrixXd* transform) {
  Eigen::MatrixXd t;
  lll_vectors(basis_cols, t);
  if (transform) *transform = t;
  return basis_cols.transpose() * basis_cols;
}

std::vector<RationalVector> enumerate_short_vectors(const Eigen::MatrixXd& gram, double radius_sq,
                                                    std::size_t node_budget, bool* complete) {
  Eigen::MatrixXd T;
  Eigen::MatrixXd reduced = lll_gram(gram, &T);
  std::vector<RationalVector> out;
  fincke_pohst(reduced, radius_sq, node_budget,
               [&](const std::vector<long long>& x, double) { out.push_back(back_transform(x, T)); }, complete);
  return out;
}

ShortVectorSearch shortest_vector(const Eigen::MatrixXd& gram, std::size_t node_budget) {
  if (gram.rows() == 0) throw DomainError("shortest vector of an empty lattice");
  return shortest_vector_basis(cholesky_upper(gram), node_budget);
}

ShortVectorSearch shortest_vector_basis(const Eigen::MatrixXd& basis_cols, std::size_t node_budget) {
  ShortVectorSearch res;
  if (basis_cols.cols() == 0) throw DomainError("shortest vector of an empty lattice");
  Eigen::MatrixXd b = basis_cols;
  Eigen::MatrixXd T;
  Eigen::MatrixXd reduced = lll_basis(b, &T);
  std::size_t best_i = 0;
  for (int i = 1; i < reduced.rows(); ++i)
    if (reduced(i, i) < reduced(best_i, best_i)) best_i = i;
  std::vector<long long> best(reduced.rows(), 0);
  best[best_i] = 1;
  double best_sq = reduced(best_i, best_i);
  bool complete = true;
  res.nodes = fincke_pohst(reduced, best_sq * (1 + 1e-10), node_budget,
                           [&](const std::vector<long long>& x, double) {
                             Eigen::VectorXd c(x.size());
                             for (std::size_t i = 0; i < x.size(); ++i) c[i] = static_cast<double>(x[i]);
                             double sq = (b * c).squaredNorm();
                             if (sq < best_sq * (1 - 1e-14)) {
                               best_sq = sq;
                               best = x;
                             }
                           },
                           &complete);
  res.coefficients = back_transform(best, T);
  res.norm_sq = best_sq;
  res.upper_sq = best_sq;
  res.certified = complete;
  res.lower_sq = complete ? best_sq : gso_min(reduced);
  return res;
}

ShortVectorSearch shortest_vector(const RationalMatrix& gram, std::size_t node_budget) {
  ShortVectorSearch res;
  if (gram.rows() == 0) throw DomainError("shortest vector of an empty lattice");
  RationalMatrix T;
  RationalMatrix reduced = lll_gram(gram, &T);
  const std::size_t n = reduced.rows();
  std::size_t best_i = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (reduced(i, i) < reduced(best_i, best_i)) best_i = i;
  Rational best_exact = reduced(best_i, best_i);
  std::vector<long long> best(n, 0);
  best[best_i] = 1;
  Eigen::MatrixXd rd = reduced.to_double();
  bool complete = true;
  auto exact_norm = [&](const std::vector<long long>& x) {
    Rational s = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (x[i] == 0) continue;
      for (std::size_t j = 0; j < n; ++j)
        if (x[j] != 0) s += reduced(i, j) * Rational(static_cast<long>(x[i] * x[j]));
    }
    return s;
  };
  // Enumerate with a relative safety margin, then decide exactly.
  res.nodes = fincke_pohst(rd, best_exact.get_d() * (1 + 1e-8), node_budget,
                           [&](const std::vector<long long>& x, double) {
                             Rational s = exact_norm(x);
                             if (s < best_exact) {
                               best_exact = s;
                               best = x;
                             }
                           },
                           &complete);
  res.coefficients = back_transform(best, T);
  res.exact = true;
  res.exact_norm_sq = best_exact;
  res.norm_sq = best_exact.get_d();
  res.upper_sq = res.norm_sq;
  res.certified = complete;
  res.lower_sq = complete ? res.norm_sq : gso_min(rd);
  return res;
}

}  // namespace orbitlab
