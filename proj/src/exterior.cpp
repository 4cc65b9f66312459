#include "orbitlab/exterior.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "orbitlab/errors.hpp"

namespace orbitlab {

std::vector<Subset> subsets(std::size_t m, std::size_t k) {
  std::vector<Subset> out;
  if (k > m) return out;
  Subset s(k);
  for (std::size_t i = 0; i < k; ++i) s[i] = static_cast<int>(i);
  while (true) {
    out.push_back(s);
    int i = static_cast<int>(k) - 1;
    while (i >= 0 && s[i] == static_cast<int>(m - k + i)) --i;
    if (i < 0) break;
    ++s[i];
    for (std::size_t j = i + 1; j < k; ++j) s[j] = s[j - 1] + 1;
  }
  return out;
}

namespace {

void check_degree(std::size_t k) {
  if (k > kMaxWedgeDegree) throw DomainError("exterior degree above the supported cap of 12");
}

std::size_t subset_index(const Subset& s, std::size_t m) {
  // Rank in lexicographic order.
  auto binom = [](std::size_t n, std::size_t r) -> std::size_t {
    if (r > n) return 0;
    std::size_t c = 1;
    for (std::size_t i = 1; i <= r; ++i) c = c * (n - r + i) / i;
    return c;
  };
  const std::size_t k = s.size();
  std::size_t idx = 0;
  int prev = -1;
  for (std::size_t i = 0; i < k; ++i) {
    for (int v = prev + 1; v < s[i]; ++v) idx += binom(m - 1 - v, k - 1 - i);
    prev = s[i];
  }
  return idx;
}

double det_small(const Matrix& a) {
  switch (a.rows()) {
    case 0: return 1.0;
    case 1: return a(0, 0);
    case 2: return a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    default: return a.partialPivLu().determinant();
  }
}

}  // namespace

WedgeVector::WedgeVector(std::size_t ambient_dim, std::size_t degree) : m_(ambient_dim), k_(degree) {
  check_degree(degree);
  if (degree > ambient_dim) throw DomainError("wedge degree exceeds ambient dimension");
}

Rational WedgeVector::coefficient(const Subset& s) const {
  auto it = coords_.find(s);
  return it == coords_.end() ? Rational(0) : it->second;
}

void WedgeVector::set(const Subset& s, const Rational& value) {
  if (s.size() != k_) throw DomainError("subset size does not match wedge degree");
  if (sgn(value) == 0)
    coords_.erase(s);
  else
    coords_[s] = value;
  primitive_ = false;
}

void WedgeVector::add_to(const Subset& s, const Rational& value) {
  if (sgn(value) == 0) return;
  set(s, coefficient(s) + value);
}

bool WedgeVector::check_primitive() const {
  if (coords_.empty()) return false;
  Integer g = 0;
  for (const auto& [s, q] : coords_) {
    if (q.get_den() != 1) return false;
    mpz_gcd(g.get_mpz_t(), g.get_mpz_t(), q.get_num().get_mpz_t());
  }
  return g == 1 && sgn(coords_.begin()->second) > 0;
}

WedgeVector WedgeVector::scaled(const Rational& s) const {
  WedgeVector r(m_, k_);
  if (sgn(s) == 0) return r;
  for (const auto& [sub, q] : coords_) r.coords_[sub] = q * s;
  return r;
}

Vector WedgeVector::dense() const {
  std::size_t n = 1;
  for (std::size_t i = 1; i <= k_; ++i) n = n * (m_ - k_ + i) / i;
  Vector v = Vector::Zero(n);
  for (const auto& [s, q] : coords_) v[subset_index(s, m_)] = q.get_d();
  return v;
}

std::string WedgeVector::str() const {
  std::ostringstream os;
  os << '{';
  bool first = true;
  for (const auto& [s, q] : coords_) {
    os << (first ? "" : ", ") << 'e';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "^" : "") << s[i];
    os << ": " << q.get_str();
    first = false;
  }
  os << '}';
  return os.str();
}

std::size_t SubgroupData::dimension() const {
  if (algebra.empty()) return 0;
  return rank(RationalMatrix::from_rows(algebra));
}

void validate_subgroup(const LieAlgebra& g, const SubgroupData& m) {
  for (const auto& v : m.algebra)
    if (v.size() != g.dim()) throw DomainError("subgroup spanning vector has wrong dimension");
  if (!g.is_subalgebra(m.algebra)) throw DomainError("subgroup span is not closed under the bracket");
}

SubgroupData conjugate_subgroup(const LieAlgebra& g, const SubgroupData& m, const RationalMatrix& gamma) {
  RationalMatrix ad = g.adjoint_matrix(gamma);
  SubgroupData out{{}, m.label + "^conj"};
  for (const auto& v : m.algebra) out.algebra.push_back(ad * v);
  return out;
}

WedgeVector wedge(const std::vector<RationalVector>& vectors, std::size_t m) {
  const std::size_t k = vectors.size();
  check_degree(k);
  WedgeVector w(m, k);
  for (const auto& v : vectors)
    if (v.size() != m) throw DomainError("wedge factor has wrong dimension");
  RationalMatrix minor(k, k);
  for (const auto& s : subsets(m, k)) {
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t c = 0; c < k; ++c) minor(r, c) = vectors[r][s[c]];
    w.set(s, determinant(minor));
  }
  return w;
}

WedgeVector wedge_with(const RationalVector& z, const WedgeVector& w) {
  const std::size_t m = w.ambient_dim(), k = w.degree();
  if (z.size() != m) throw DomainError("wedge factor has wrong dimension");
  if (k + 1 > m) throw DomainError("top-degree wedge requested");
  WedgeVector r(m, k + 1);
  for (const auto& [s, q] : w.coords())
    for (std::size_t i = 0; i < m; ++i) {
      if (sgn(z[i]) == 0) continue;
      if (std::binary_search(s.begin(), s.end(), static_cast<int>(i))) continue;
      // e_i ∧ e_S = (-1)^{#{j in S : j < i}} e_{S ∪ {i}}
      std::size_t below = std::lower_bound(s.begin(), s.end(), static_cast<int>(i)) - s.begin();
      Subset t = s;
      t.insert(t.begin() + below, static_cast<int>(i));
      Rational c = z[i] * q;
      if (below % 2) c = -c;
      r.add_to(t, c);
    }
  return r;
}

WedgeVector primitive_normalize(const WedgeVector& w) {
  if (w.is_zero()) throw DomainError("zero wedge has no primitive normalization");
  RationalVector values;
  for (const auto& [s, q] : w.coords()) values.push_back(q);
  RationalVector p = primitive_integral(values);
  WedgeVector r(w.ambient_dim(), w.degree());
  std::size_t i = 0;
  for (const auto& [s, q] : w.coords()) r.set(s, p[i++]);
  r.mark_primitive(true);
  return r;
}

WedgeVector wedge_basis_vector(const SubgroupData& m, std::size_t ambient_dim) {
  if (m.algebra.empty()) throw DomainError("subgroup with empty spanning set");
  if (m.dimension() != m.algebra.size()) throw DomainError("subgroup spanning set is linearly dependent");
  return primitive_normalize(wedge(m.algebra, ambient_dim));
}

WedgeVector induced_action(const LieAlgebra& g, const RationalMatrix& group_element, const WedgeVector& w) {
  if (w.ambient_dim() != g.dim()) throw DomainError("wedge vector does not belong to this algebra");
  if (group_element.rows() != g.matrix_size()) throw DomainError("group element has wrong size");
  const std::size_t m = g.dim(), k = w.degree();
  RationalMatrix a = g.adjoint_matrix(group_element);
  WedgeVector r(m, k);
  if (k == 0) {
    r.set({}, w.coefficient({}));
    return r;
  }
  RationalMatrix minor(k, k);
  for (const auto& t : subsets(m, k)) {
    Rational sum = 0;
    for (const auto& [s, q] : w.coords()) {
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) minor(i, j) = a(t[i], s[j]);
      Rational d = determinant(minor);
      if (sgn(d) != 0) sum += q * d;
    }
    r.set(t, sum);
  }
  return r;
}

WedgeVector orbit_map(const LieAlgebra& g, const SubgroupData& m, const RationalMatrix& group_element) {
  return induced_action(g, inverse(group_element), wedge_basis_vector(m, g.dim()));
}

double wedge_norm(const LieAlgebra& g, std::size_t k, const Vector& w) {
  const std::size_t m = g.dim();
  auto subs = subsets(m, k);
  if (static_cast<std::size_t>(w.size()) != subs.size()) throw DomainError("dense wedge has wrong length");
  const Matrix& G = g.gram_double();
  double sum = 0;
  if (g.gram_is_diagonal()) {
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (w[i] == 0) continue;
      double p = 1;
      for (int s : subs[i]) p *= G(s, s);
      sum += w[i] * w[i] * p;
    }
    return std::sqrt(sum);
  }
  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < subs.size(); ++i)
    if (w[i] != 0) support.push_back(i);
  Matrix block(k, k);
  for (std::size_t a : support)
    for (std::size_t b : support) {
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) block(i, j) = G(subs[a][i], subs[b][j]);
      sum += w[a] * w[b] * det_small(block);
    }
  return std::sqrt(std::max(0.0, sum));
}

Rational wedge_norm_sq_exact(const LieAlgebra& g, const WedgeVector& w) {
  const std::size_t k = w.degree();
  Rational sum = 0;
  RationalMatrix block(k, k);
  for (const auto& [s, a] : w.coords())
    for (const auto& [t, b] : w.coords()) {
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) block(i, j) = g.gram()(s[i], t[j]);
      sum += a * b * determinant(block);
    }
  return sum;
}

double wedge_norm(const LieAlgebra& g, const WedgeVector& w) { return wedge_norm(g, w.degree(), w.dense()); }

double discriminant(const LieAlgebra& g, const SubgroupData& m, const RationalMatrix& group_element) {
  return wedge_norm(g, orbit_map(g, m, group_element));
}

double subgroup_height(const LieAlgebra& g, const SubgroupData& m) {
  return wedge_norm(g, wedge_basis_vector(m, g.dim()));
}

double transversal_norm(const LieAlgebra& g, const SubgroupData& m, const RationalMatrix& group_element,
                        const RationalVector& z) {
  WedgeVector eta = orbit_map(g, m, group_element);
  if (eta.degree() >= g.dim()) throw DomainError("top-degree wedge requested");
  return wedge_norm(g, wedge_with(z, eta)) / g.norm(z);
}

bool transversal_vanishes(const LieAlgebra& g, const SubgroupData& m, const RationalMatrix& group_element,
                          const RationalVector& z) {
  WedgeVector eta = orbit_map(g, m, group_element);
  if (eta.degree() >= g.dim()) throw DomainError("top-degree wedge requested");
  return wedge_with(z, eta).is_zero();
}

Matrix compound_matrix(const Matrix& a, const std::vector<Subset>& subs) {
  const std::size_t n = subs.size();
  const std::size_t k = n ? subs[0].size() : 0;
  Matrix c(n, n);
  Matrix block(k, k);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) block(i, j) = a(subs[t][i], subs[s][j]);
      c(t, s) = det_small(block);
    }
  return c;
}

Matrix wedge_with_matrix(const Vector& z, std::size_t m, std::size_t k) {
  if (k + 1 > m) throw DomainError("top-degree wedge requested");
  auto from = subsets(m, k);
  Matrix r = Matrix::Zero(static_cast<Eigen::Index>(subsets(m, k + 1).size()), static_cast<Eigen::Index>(from.size()));
  for (std::size_t c = 0; c < from.size(); ++c) {
    const Subset& s = from[c];
    for (std::size_t i = 0; i < m; ++i) {
      if (z[i] == 0 || std::binary_search(s.begin(), s.end(), static_cast<int>(i))) continue;
      std::size_t below = std::lower_bound(s.begin(), s.end(), static_cast<int>(i)) - s.begin();
      Subset t = s;
      t.insert(t.begin() + below, static_cast<int>(i));
      r(subset_index(t, m), c) += (below % 2 ? -1.0 : 1.0) * z[i];
    }
  }
  return r;
}

OrbitMapEvaluator::OrbitMapEvaluator(const LieAlgebra& g, std::size_t k, const Matrix& group_element, const Vector& z)
    : algebra_(&g), k_(k) {
  check_degree(k);
  Eigen::FullPivLU<Matrix> lu(group_element);
  if (!lu.isInvertible()) throw DomainError("singular group element");
  compound_ = compound_matrix(g.adjoint_matrix(Matrix(lu.inverse())), subsets(g.dim(), k));
  zwedge_ = wedge_with_matrix(z / g.norm(z), g.dim(), k);
}

}  // namespace orbitlab
