#include "orbitlab/rational.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "orbitlab/errors.hpp"

namespace orbitlab {

RationalMatrix::RationalMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, Rational(0)) {}

RationalMatrix::RationalMatrix(std::initializer_list<std::initializer_list<Rational>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DomainError("ragged matrix literal");
    for (const auto& x : r) data_.push_back(x);
  }
}

RationalMatrix RationalMatrix::identity(std::size_t n) {
  RationalMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1;
  return m;
}

RationalMatrix RationalMatrix::unit(std::size_t n, std::size_t i, std::size_t j) {
  RationalMatrix m(n, n);
  m(i, j) = 1;
  return m;
}

RationalMatrix RationalMatrix::diagonal(const RationalVector& d) {
  RationalMatrix m(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  return m;
}

RationalMatrix RationalMatrix::from_rows(const std::vector<RationalVector>& rows) {
  if (rows.empty()) return {};
  RationalMatrix m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols_) throw DomainError("ragged row list");
    for (std::size_t j = 0; j < m.cols_; ++j) m(i, j) = rows[i][j];
  }
  return m;
}

RationalVector RationalMatrix::row(std::size_t i) const {
  return RationalVector(data_.begin() + i * cols_, data_.begin() + (i + 1) * cols_);
}

RationalVector RationalMatrix::col(std::size_t j) const {
  RationalVector v(rows_);
  for (std::size_t i = 0; i < rows_; ++i) v[i] = (*this)(i, j);
  return v;
}

RationalMatrix RationalMatrix::transpose() const {
  RationalMatrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Rational RationalMatrix::trace() const {
  Rational s = 0;
  for (std::size_t i = 0; i < std::min(rows_, cols_); ++i) s += (*this)(i, i);
  return s;
}

bool RationalMatrix::is_zero() const {
  return std::all_of(data_.begin(), data_.end(), [](const Rational& q) { return sgn(q) == 0; });
}

RationalMatrix& RationalMatrix::operator+=(const RationalMatrix& o) {
  if (rows_ != o.rows_ || cols_ != o.cols_) throw DomainError("matrix shape mismatch in +");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

RationalMatrix& RationalMatrix::operator-=(const RationalMatrix& o) {
  if (rows_ != o.rows_ || cols_ != o.cols_) throw DomainError("matrix shape mismatch in -");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

RationalMatrix& RationalMatrix::operator*=(const Rational& s) {
  for (auto& x : data_) x *= s;
  return *this;
}

RationalMatrix operator*(const RationalMatrix& a, const RationalMatrix& b) {
  if (a.cols_ != b.rows_) throw DomainError("matrix shape mismatch in *");
  RationalMatrix c(a.rows_, b.cols_);
  Rational t;
  for (std::size_t i = 0; i < a.rows_; ++i)
    for (std::size_t k = 0; k < a.cols_; ++k) {
      const Rational& aik = a(i, k);
      if (sgn(aik) == 0) continue;
      for (std::size_t j = 0; j < b.cols_; ++j) {
        if (sgn(b(k, j)) == 0) continue;
        t = aik * b(k, j);
        c(i, j) += t;
      }
    }
  return c;
}

RationalVector operator*(const RationalMatrix& a, const RationalVector& v) {
  if (a.cols_ != v.size()) throw DomainError("matrix-vector shape mismatch");
  RationalVector r(a.rows_, Rational(0));
  for (std::size_t i = 0; i < a.rows_; ++i)
    for (std::size_t j = 0; j < a.cols_; ++j)
      if (sgn(v[j]) != 0 && sgn(a(i, j)) != 0) r[i] += a(i, j) * v[j];
  return r;
}

bool RationalMatrix::operator==(const RationalMatrix& o) const {
  return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
}

Eigen::MatrixXd RationalMatrix::to_double() const {
  Eigen::MatrixXd m(rows_, cols_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) m(i, j) = orbitlab::to_double((*this)(i, j));
  return m;
}

std::string RationalMatrix::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < rows_; ++i) {
    os << (i ? ", [" : "[");
    for (std::size_t j = 0; j < cols_; ++j) os << (j ? ", " : "") << (*this)(i, j).get_str();
    os << ']';
  }
  os << ']';
  return os.str();
}

double to_double(const Rational& q) { return q.get_d(); }

std::string to_string(const Rational& q) { return q.get_str(); }

Rational parse_rational(const std::string& raw) {
  std::string s;
  for (char c : raw)
    if (!std::isspace(static_cast<unsigned char>(c))) s += c;
  if (s.empty()) throw DomainError("empty rational literal");
  if (s.find('/') != std::string::npos) {
    Rational q;
    if (q.set_str(s, 10) != 0 || sgn(q.get_den()) == 0) throw DomainError("bad rational literal: " + raw);
    q.canonicalize();
    return q;
  }
  // Decimal with optional exponent, parsed exactly.
  std::size_t pos = 0;
  bool neg = false;
  if (s[pos] == '+' || s[pos] == '-') neg = s[pos++] == '-';
  std::string digits;
  long frac_digits = 0;
  bool seen_dot = false;
  for (; pos < s.size() && (std::isdigit(static_cast<unsigned char>(s[pos])) || s[pos] == '.'); ++pos) {
    if (s[pos] == '.') {
      if (seen_dot) throw DomainError("bad rational literal: " + raw);
      seen_dot = true;
    } else {
      digits += s[pos];
      if (seen_dot) ++frac_digits;
    }
  }
  if (digits.empty()) throw DomainError("bad rational literal: " + raw);
  long exponent = 0;
  if (pos < s.size()) {
    if (s[pos] != 'e' && s[pos] != 'E') throw DomainError("bad rational literal: " + raw);
    try {
      std::size_t used = 0;
      exponent = std::stol(s.substr(pos + 1), &used);
      if (used != s.size() - pos - 1) throw DomainError("bad rational literal: " + raw);
    } catch (const std::logic_error&) {
      throw DomainError("bad rational literal: " + raw);
    }
  }
  Integer num(digits, 10);
  long shift = exponent - frac_digits;
  Integer p10;
  mpz_ui_pow_ui(p10.get_mpz_t(), 10, static_cast<unsigned long>(std::labs(shift)));
  Rational q = shift >= 0 ? Rational(num * p10) : Rational(num, p10);
  q.canonicalize();
  return neg ? Rational(-q) : q;
}

RationalMatrix rref(RationalMatrix a, std::vector<std::size_t>* pivots) {
  std::size_t r = 0;
  if (pivots) pivots->clear();
  Rational f;
  for (std::size_t c = 0; c < a.cols() && r < a.rows(); ++c) {
    std::size_t p = r;
    while (p < a.rows() && sgn(a(p, c)) == 0) ++p;
    if (p == a.rows()) continue;
    if (p != r)
      for (std::size_t j = 0; j < a.cols(); ++j) std::swap(a(p, j), a(r, j));
    Rational inv = 1 / a(r, c);
    for (std::size_t j = c; j < a.cols(); ++j) a(r, j) *= inv;
    for (std::size_t i = 0; i < a.rows(); ++i) {
      if (i == r || sgn(a(i, c)) == 0) continue;
      f = a(i, c);
      for (std::size_t j = c; j < a.cols(); ++j)
        if (sgn(a(r, j)) != 0) a(i, j) -= f * a(r, j);
    }
    if (pivots) pivots->push_back(c);
    ++r;
  }
  return a;
}

Rational determinant(RationalMatrix a) {
  if (!a.square()) throw DomainError("determinant of non-square matrix");
  const std::size_t n = a.rows();
  Rational det = 1, f;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    while (p < n && sgn(a(p, c)) == 0) ++p;
    if (p == n) return 0;
    if (p != c) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(p, j), a(c, j));
      det = -det;
    }
    det *= a(c, c);
    for (std::size_t i = c + 1; i < n; ++i) {
      if (sgn(a(i, c)) == 0) continue;
      f = a(i, c) / a(c, c);
      for (std::size_t j = c; j < n; ++j) a(i, j) -= f * a(c, j);
    }
  }
  return det;
}

std::size_t rank(RationalMatrix a) {
  std::vector<std::size_t> piv;
  rref(std::move(a), &piv);
  return piv.size();
}

RationalMatrix inverse(const RationalMatrix& a) {
  if (!a.square()) throw DomainError("inverse of non-square matrix");
  const std::size_t n = a.rows();
  RationalMatrix aug(n, 2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) aug(i, j) = a(i, j);
    aug(i, n + i) = 1;
  }
  std::vector<std::size_t> piv;
  aug = rref(std::move(aug), &piv);
  if (piv.size() < n || piv[n - 1] != n - 1) throw DomainError("singular matrix");
  RationalMatrix inv(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) inv(i, j) = aug(i, n + j);
  return inv;
}

std::vector<RationalVector> kernel(const RationalMatrix& a) {
  std::vector<std::size_t> piv;
  RationalMatrix r = rref(a, &piv);
  std::vector<bool> is_pivot(a.cols(), false);
  for (auto c : piv) is_pivot[c] = true;
  std::vector<RationalVector> basis;
  for (std::size_t f = 0; f < a.cols(); ++f) {
    if (is_pivot[f]) continue;
    RationalVector v(a.cols(), Rational(0));
    v[f] = 1;
    for (std::size_t i = 0; i < piv.size(); ++i) v[piv[i]] = -r(i, f);
    basis.push_back(std::move(v));
  }
  return basis;
}

std::vector<RationalVector> span_basis(const std::vector<RationalVector>& vectors) {
  if (vectors.empty()) return {};
  std::vector<std::size_t> piv;
  RationalMatrix r = rref(RationalMatrix::from_rows(vectors), &piv);
  std::vector<RationalVector> out;
  for (std::size_t i = 0; i < piv.size(); ++i) out.push_back(r.row(i));
  return out;
}

bool in_span(const std::vector<RationalVector>& basis, const RationalVector& v) {
  if (is_zero(v)) return true;
  if (basis.empty()) return false;
  auto rows = basis;
  const std::size_t before = rank(RationalMatrix::from_rows(rows));
  rows.push_back(v);
  return rank(RationalMatrix::from_rows(rows)) == before;
}

RationalMatrix power(const RationalMatrix& a, unsigned k) {
  RationalMatrix r = RationalMatrix::identity(a.rows());
  for (unsigned i = 0; i < k; ++i) r = r * a;
  return r;
}

bool is_integral(const RationalVector& v) {
  return std::all_of(v.begin(), v.end(), [](const Rational& q) { return q.get_den() == 1; });
}

Integer content(const RationalVector& v) {
  Integer g = 0;
  for (const auto& q : v) {
    if (q.get_den() != 1) throw DomainError("content of non-integral vector");
    mpz_gcd(g.get_mpz_t(), g.get_mpz_t(), q.get_num().get_mpz_t());
  }
  return g;
}

RationalVector primitive_integral(const RationalVector& v) {
  Integer l = 1;
  for (const auto& q : v) mpz_lcm(l.get_mpz_t(), l.get_mpz_t(), q.get_den().get_mpz_t());
  RationalVector w(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) w[i] = v[i] * l;
  Integer g = content(w);
  if (g == 0) throw DomainError("zero vector has no primitive normalization");
  int sign = 0;
  for (const auto& q : w)
    if ((sign = sgn(q)) != 0) break;
  Rational d(g * sign);
  for (auto& q : w) q /= d;
  return w;
}

// Column operations bring A to [H | 0]; the matching columns of the unimodular
// transform span the integer kernel.
std::vector<RationalVector> integer_kernel(const RationalMatrix& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<std::vector<Integer>> M(m, std::vector<Integer>(n));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (a(i, j).get_den() != 1) throw DomainError("integer_kernel needs an integral matrix");
      M[i][j] = a(i, j).get_num();
    }
  std::vector<std::vector<Integer>> U(n, std::vector<Integer>(n, 0));
  for (std::size_t i = 0; i < n; ++i) U[i][i] = 1;

  auto colop = [&](std::size_t c, std::size_t j, const Integer& s, const Integer& t, const Integer& u,
                   const Integer& v) {
    // col_c <- s col_c + t col_j ; col_j <- u col_c + v col_j
    Integer x, y;
    for (auto* mat : {&M, &U})
      for (auto& row : *mat) {
        x = s * row[c] + t * row[j];
        y = u * row[c] + v * row[j];
        row[c] = x;
        row[j] = y;
      }
  };

  std::size_t c = 0;
  for (std::size_t i = 0; i < m && c < n; ++i) {
    for (std::size_t j = c + 1; j < n; ++j) {
      if (M[i][j] == 0) continue;
      Integer g, s, t;
      mpz_gcdext(g.get_mpz_t(), s.get_mpz_t(), t.get_mpz_t(), M[i][c].get_mpz_t(), M[i][j].get_mpz_t());
      Integer u = -M[i][j] / g, v = M[i][c] / g;
      colop(c, j, s, t, u, v);
    }
    if (M[i][c] != 0) ++c;
  }
  std::vector<RationalVector> basis;
  for (std::size_t j = c; j < n; ++j) {
    RationalVector v(n);
    for (std::size_t k = 0; k < n; ++k) v[k] = Rational(U[k][j]);
    basis.push_back(std::move(v));
  }
  return basis;
}

std::vector<RationalVector> saturate(const std::vector<RationalVector>& vectors) {
  auto basis = span_basis(vectors);
  if (basis.empty()) return {};
  const std::size_t n = basis[0].size();
  if (basis.size() == n) {
    std::vector<RationalVector> id;
    for (std::size_t i = 0; i < n; ++i) {
      RationalVector e(n, Rational(0));
      e[i] = 1;
      id.push_back(e);
    }
    return id;
  }
  for (auto& b : basis) b = primitive_integral(b);
  auto perp = integer_kernel(RationalMatrix::from_rows(basis));
  return integer_kernel(RationalMatrix::from_rows(perp));
}

RationalVector add(const RationalVector& a, const RationalVector& b) {
  if (a.size() != b.size()) throw DomainError("vector size mismatch");
  RationalVector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}

RationalVector sub(const RationalVector& a, const RationalVector& b) {
  if (a.size() != b.size()) throw DomainError("vector size mismatch");
  RationalVector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

RationalVector scale(const RationalVector& a, const Rational& s) {
  RationalVector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] * s;
  return r;
}

bool is_zero(const RationalVector& v) {
  return std::all_of(v.begin(), v.end(), [](const Rational& q) { return sgn(q) == 0; });
}

Eigen::VectorXd to_double(const RationalVector& v) {
  Eigen::VectorXd r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) r[i] = v[i].get_d();
  return r;
}

Rational rationalize(double x, long max_denominator) {
  if (!std::isfinite(x)) throw DomainError("cannot rationalize a non-finite value");
  // Convergents p/q of the continued fraction, stop before q exceeds the bound.
  Integer p0 = 0, q0 = 1, p1 = 1, q1 = 0;
  double y = x;
  for (int iter = 0; iter < 64; ++iter) {
    double a = std::floor(y);
    Integer ai(a);
    Integer p2 = ai * p1 + p0, q2 = ai * q1 + q0;
    if (q2 > max_denominator) break;
    p0 = p1; q0 = q1; p1 = p2; q1 = q2;
    double frac = y - a;
    if (frac < 1e-15) break;
    y = 1.0 / frac;
  }
  Rational r(p1, q1);
  r.canonicalize();
  return r;
}

}  // namespace orbitlab
