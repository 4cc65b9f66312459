#pragma once

#include <gmpxx.h>

#include <Eigen/Dense>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace orbitlab {

using Integer = mpz_class;
using Rational = mpq_class;
using RationalVector = std::vector<Rational>;

// Dense exact matrix. Not restricted to square shapes: kernels and
// saturations work on rectangular data.
class RationalMatrix {
 public:
  RationalMatrix() = default;
  RationalMatrix(std::size_t rows, std::size_t cols);
  RationalMatrix(std::initializer_list<std::initializer_list<Rational>> rows);

  static RationalMatrix identity(std::size_t n);
  static RationalMatrix unit(std::size_t n, std::size_t i, std::size_t j);  // e_ij
  static RationalMatrix diagonal(const RationalVector& d);
  static RationalMatrix from_rows(const std::vector<RationalVector>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool square() const { return rows_ == cols_; }

  Rational& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const Rational& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  RationalVector row(std::size_t i) const;
  RationalVector col(std::size_t j) const;
  // Row-major flattening.
  const RationalVector& flat() const { return data_; }

  RationalMatrix transpose() const;
  Rational trace() const;
  bool is_zero() const;

  RationalMatrix& operator+=(const RationalMatrix& o);
  RationalMatrix& operator-=(const RationalMatrix& o);
  RationalMatrix& operator*=(const Rational& s);

  friend RationalMatrix operator+(RationalMatrix a, const RationalMatrix& b) { return a += b; }
  friend RationalMatrix operator-(RationalMatrix a, const RationalMatrix& b) { return a -= b; }
  friend RationalMatrix operator*(RationalMatrix a, const Rational& s) { return a *= s; }
  friend RationalMatrix operator*(const Rational& s, RationalMatrix a) { return a *= s; }
  friend RationalMatrix operator-(RationalMatrix a) { return a *= Rational(-1); }
  friend RationalMatrix operator*(const RationalMatrix& a, const RationalMatrix& b);
  friend RationalVector operator*(const RationalMatrix& a, const RationalVector& v);
  bool operator==(const RationalMatrix& o) const;
  bool operator!=(const RationalMatrix& o) const { return !(*this == o); }

  Eigen::MatrixXd to_double() const;
  std::string str() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  RationalVector data_;
};

double to_double(const Rational& q);
Rational parse_rational(const std::string& text);  // "3", "-7/2", "0.25"
std::string to_string(const Rational& q);

// Exact linear algebra.
Rational determinant(RationalMatrix a);
std::size_t rank(RationalMatrix a);
RationalMatrix inverse(const RationalMatrix& a);  // throws DomainError when singular
RationalMatrix rref(RationalMatrix a, std::vector<std::size_t>* pivots = nullptr);
// Basis of {x : a x = 0}.
std::vector<RationalVector> kernel(const RationalMatrix& a);
// Row basis of the span of the given vectors (rref rows).
std::vector<RationalVector> span_basis(const std::vector<RationalVector>& vectors);
bool in_span(const std::vector<RationalVector>& basis, const RationalVector& v);
RationalMatrix power(const RationalMatrix& a, unsigned k);

// Integer helpers.
RationalVector primitive_integral(const RationalVector& v);  // lcm-clear, gcd-divide, first nonzero > 0
bool is_integral(const RationalVector& v);
Integer content(const RationalVector& integral);  // gcd of entries

// Integer kernel of an integral matrix: a Z-basis of {x in Z^n : a x = 0}.
std::vector<RationalVector> integer_kernel(const RationalMatrix& a);
// Z-basis of span_Q(vectors) ∩ Z^n.
std::vector<RationalVector> saturate(const std::vector<RationalVector>& vectors);

RationalVector add(const RationalVector& a, const RationalVector& b);
RationalVector sub(const RationalVector& a, const RationalVector& b);
RationalVector scale(const RationalVector& a, const Rational& s);
bool is_zero(const RationalVector& v);
Eigen::VectorXd to_double(const RationalVector& v);
// Best rational approximation with bounded denominator (continued fractions).
Rational rationalize(double x, long max_denominator = 1000000);

}  // namespace orbitlab
