#include "orbitlab/diophantine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "orbitlab/errors.hpp"
#include "orbitlab/io.hpp"
#include "orbitlab/lattice.hpp"
#include "orbitlab/parallel.hpp"

namespace orbitlab {

double psi(double s, double eta, const ConstantLedger& ledger) {
  if (!(eta > 0 && eta < 0.5)) throw DomainError("psi: eta must lie in (0, 1/2)");
  if (!(s > 0)) throw DomainError("psi: s must be positive");
  const double a = ledger.get("A4");
  return std::pow(s, -a) * std::pow(eta, a) / ledger.get("C4");
}

bool psi_within_avoidance_bound(double eta, const ConstantLedger& ledger, const std::vector<double>& grid) {
  const double a3 = ledger.get("A3"), c3 = ledger.get("C3");
  for (double s : grid)
    if (psi(s, eta, ledger) > std::pow(s, -a3) * std::pow(eta, a3) / c3 * (1 + 1e-12)) return false;
  return true;
}

std::string to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::Stabilizers: return "stabilizers";
    case FamilyKind::NormalFactors: return "normal-factors";
    case FamilyKind::Custom: return "custom";
  }
  return "?";
}

std::string SubgroupFamily::records() const {
  std::ostringstream os;
  for (const auto& m : members)
    os << m.subgroup.label << "\t" << m.subgroup.dimension() << "\t" << format_double(m.height) << "\t"
       << content_hash(m.wedge.str()) << "\n";
  return os.str();
}

FamilyMember make_member(const LieAlgebra& g, SubgroupData m, std::optional<RationalVector> v) {
  FamilyMember out;
  out.wedge = wedge_basis_vector(m, g.dim());
  out.height = wedge_norm(g, out.wedge);
  out.subgroup = std::move(m);
  out.vector = std::move(v);
  return out;
}

SubgroupData pointwise_stabilizer(const LieAlgebra& so, const std::vector<RationalVector>& vectors) {
  const std::size_t n = so.matrix_size();
  RationalMatrix eqs(n * vectors.size(), so.dim());
  for (std::size_t j = 0; j < so.dim(); ++j)
    for (std::size_t b = 0; b < vectors.size(); ++b) {
      if (vectors[b].size() != n) throw DomainError("pointwise_stabilizer: vector of wrong length");
      RationalVector xv = so.basis(j) * vectors[b];
      for (std::size_t i = 0; i < n; ++i) eqs(b * n + i, j) = xv[i];
    }
  std::string label = "M_{";
  for (std::size_t b = 0; b < vectors.size(); ++b) {
    if (b) label += ";";
    for (std::size_t i = 0; i < n; ++i) label += (i ? "," : "") + to_string(vectors[b][i]);
  }
  label += "}";
  return {kernel(eqs), label};
}

namespace {

Integer gcd_of(const std::vector<long>& v) {
  Integer g = 0;
  for (long x : v) g = gcd(g, Integer(x));
  return g;
}

}  // namespace

SubgroupFamily enumerate_stabilizers(const AlgebraPtr& so, const RationalMatrix& q, double norm_bound,
                                     const std::vector<RationalVector>& constraint) {
  if (determinant(q) == 0) throw DomainError("enumerate_stabilizers: degenerate form");
  const std::size_t n = q.rows();
  SubgroupFamily fam;
  fam.algebra = so;
  fam.kind = FamilyKind::Stabilizers;
  fam.norm_bound = norm_bound;
  fam.constraint = constraint;

  std::vector<RationalVector> vectors;
  const double bound_sq = norm_bound * norm_bound * (1 + 1e-12);
  if (!constraint.empty()) {
    // Integral points of L: short vectors of the saturated basis.
    auto basis = saturate(constraint);
    RationalMatrix b = RationalMatrix::from_rows(basis);
    RationalMatrix gram = b * b.transpose();
    bool complete = true;
    auto coeffs = enumerate_short_vectors(gram.to_double(), bound_sq, kDefaultNodeBudget, &complete);
    if (!complete) throw BudgetExhausted("enumerate_stabilizers: enumeration budget exhausted");
    for (const auto& c : coeffs) {
      RationalVector v(n, Rational(0));
      for (std::size_t i = 0; i < basis.size(); ++i) v = add(v, scale(basis[i], c[i]));
      v = primitive_integral(v);
      Rational nsq = 0;
      for (const auto& x : v) nsq += x * x;
      if (nsq.get_d() <= bound_sq) vectors.push_back(v);
    }
  } else {
    const long r = static_cast<long>(std::floor(norm_bound + 1e-9));
    std::vector<long> v(n, -r);
    while (true) {
      long sq = 0;
      for (long x : v) sq += x * x;
      std::size_t lead = 0;
      while (lead < n && v[lead] == 0) ++lead;
      if (lead < n && v[lead] > 0 && sq <= bound_sq && gcd_of(v) == 1) {
        RationalVector rv(n);
        for (std::size_t i = 0; i < n; ++i) rv[i] = v[i];
        vectors.push_back(rv);
      }
      std::size_t i = n;
      while (i > 0 && v[i - 1] == r) v[--i] = -r;
      if (i == 0) break;
      ++v[i - 1];
    }
  }
  std::sort(vectors.begin(), vectors.end(), [](const RationalVector& a, const RationalVector& b) {
    Rational na = 0, nb = 0;
    for (const auto& x : a) na += x * x;
    for (const auto& x : b) nb += x * x;
    if (na != nb) return na < nb;
    return a < b;
  });
  vectors.erase(std::unique(vectors.begin(), vectors.end()), vectors.end());
  vectors.erase(std::remove_if(vectors.begin(), vectors.end(),
                               [&](const RationalVector& v) { return quadratic_value(q, v) == 0; }),
                vectors.end());
  if (vectors.empty()) throw DomainError("enumerate_stabilizers: empty family (norm bound too small)");

  fam.members.resize(vectors.size());
  parallel_for(vectors.size(), [&](std::size_t i) {
    fam.members[i] = make_member(*so, pointwise_stabilizer(*so, {vectors[i]}), vectors[i]);
  });
  return fam;
}

namespace {

// Smallest ideal containing x.
std::vector<RationalVector> generated_ideal(const LieAlgebra& g, const RationalVector& x) {
  std::vector<RationalVector> span = span_basis({x});
  for (std::size_t i = 0; i < span.size(); ++i)
    for (std::size_t j = 0; j < g.dim(); ++j) {
      RationalVector e(g.dim(), Rational(0));
      e[j] = 1;
      RationalVector y = g.bracket(e, span[i]);
      if (!is_zero(y) && !in_span(span, y)) span.push_back(y);
    }
  return span_basis(span);
}

}  // namespace

SubgroupFamily normal_factors(const AlgebraPtr& g) {
  SubgroupFamily fam;
  fam.algebra = g;
  fam.kind = FamilyKind::NormalFactors;
  const std::size_t m = g->dim();
  std::vector<RationalVector> candidates;
  for (std::size_t i = 0; i < m; ++i) {
    RationalVector e(m, Rational(0));
    e[i] = 1;
    candidates.push_back(e);
    for (std::size_t j = i + 1; j < m; ++j)
      for (int s : {1, -1}) {
        RationalVector f = e;
        f[j] = s;
        candidates.push_back(f);
      }
  }
  std::vector<std::vector<RationalVector>> ideals;
  for (const auto& c : candidates) {
    auto ideal = generated_ideal(*g, c);
    if (ideal.size() == m) continue;
    bool seen = false;
    for (const auto& other : ideals)
      if (other.size() == ideal.size() && std::all_of(ideal.begin(), ideal.end(), [&](const RationalVector& v) {
            return in_span(other, v);
          }))
        seen = true;
    if (!seen) ideals.push_back(ideal);
  }
  // Keep the minimal ones.
  std::sort(ideals.begin(), ideals.end(), [](const auto& a, const auto& b) { return a.size() < b.size(); });
  std::vector<std::vector<RationalVector>> minimal;
  for (const auto& ideal : ideals) {
    bool has_smaller = false;
    for (const auto& small : minimal)
      if (std::all_of(small.begin(), small.end(), [&](const RationalVector& v) { return in_span(ideal, v); }))
        has_smaller = true;
    if (!has_smaller) minimal.push_back(ideal);
  }
  for (std::size_t i = 0; i < minimal.size(); ++i)
    fam.members.push_back(make_member(*g, {minimal[i], "ideal" + std::to_string(i)}));
  return fam;
}

SubgroupFamily custom_family(const AlgebraPtr& g, std::vector<SubgroupData> members) {
  SubgroupFamily fam;
  fam.algebra = g;
  fam.kind = FamilyKind::Custom;
  for (auto& m : members) {
    validate_subgroup(*g, m);
    if (!g->is_subalgebra(m.algebra)) throw DomainError("custom_family: " + m.label + " is not bracket-closed");
    fam.members.push_back(make_member(*g, std::move(m)));
  }
  for (std::size_t i = 0; i < fam.members.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (fam.members[i].wedge == fam.members[j].wedge)
        throw DomainError("custom_family: duplicate member " + fam.members[i].subgroup.label);
  return fam;
}

DiophantineReport is_diophantine(const Matrix& g, const Vector& z, double eta, double T,
                                 const SubgroupFamily& family, const ConstantLedger& ledger) {
  if (family.members.empty()) throw DomainError("is_diophantine: empty family");
  const LieAlgebra& alg = *family.algebra;
  DiophantineReport rep;
  rep.T = T;
  rep.eta = eta;
  rep.scanned = family.size();
  rep.scope = "relative to the " + to_string(family.kind) + " family of " + std::to_string(family.size()) +
              " members, not to every class-H subgroup";
  psi(1.0, eta, ledger);  // validates eta

  std::map<std::size_t, OrbitMapEvaluator> evaluators;
  for (const auto& m : family.members) {
    std::size_t k = m.wedge.degree();
    if (!evaluators.count(k)) evaluators.emplace(k, OrbitMapEvaluator(alg, k, g, z));
  }
  std::vector<std::optional<DiophantineWitness>> found(family.size());
  parallel_for(family.size(), [&](std::size_t i) {
    const auto& m = family.members[i];
    const auto& ev = evaluators.at(m.wedge.degree());
    Vector eta_vec = ev.orbit(m.wedge.dense());
    double en = ev.norm(eta_vec);
    if (!(en < T)) return;
    double tr = ev.transversal(eta_vec);
    double th = psi(en, eta, ledger);
    if (tr < th) found[i] = DiophantineWitness{i, m.subgroup.label, en, tr, th};
  });
  for (auto& w : found)
    if (w) rep.witnesses.push_back(*w);
  rep.verdict = rep.witnesses.empty();
  return rep;
}

bool is_intermediate(const LieAlgebra& alg, const std::vector<RationalVector>& h_algebra, const RationalMatrix& g,
                     const SubgroupData& m) {
  auto basis = span_basis(m.algebra);
  for (const auto& h : h_algebra) {
    RationalVector moved = alg.coordinates(adjoint(g, alg.element(h)));
    if (!in_span(basis, moved)) return false;
  }
  return true;
}

ThetaResult theta(const std::vector<RationalVector>& h_algebra, const RationalMatrix& g, const SubgroupFamily& family) {
  const LieAlgebra& alg = *family.algebra;
  ThetaResult out;
  RationalMatrix ginv = inverse(g);
  for (std::size_t i = 0; i < family.size(); ++i) {
    const auto& m = family.members[i];
    if (!is_intermediate(alg, h_algebra, g, m.subgroup)) continue;
    double d = wedge_norm(alg, induced_action(alg, ginv, m.wedge));
    if (d < out.value) {
      out.value = d;
      out.member = i;
    }
  }
  return out;
}

double min_vector_proxy(const std::vector<RationalVector>& L, const RationalMatrix* q) {
  auto basis = saturate(L);
  if (basis.empty()) throw DomainError("min_vector_proxy: zero subspace");
  RationalMatrix b = RationalMatrix::from_rows(basis);
  if (q) {
    RationalMatrix restricted = b * (*q) * b.transpose();
    // Sylvester: leading principal minors positive.
    for (std::size_t k = 1; k <= restricted.rows(); ++k) {
      RationalMatrix lead(k, k);
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) lead(i, j) = restricted(i, j);
      if (determinant(lead) <= 0) throw DomainError("min_vector_proxy: Q restricted to L is not positive definite");
    }
  }
  ShortVectorSearch s = shortest_vector(RationalMatrix(b * b.transpose()));
  return std::sqrt(s.exact_norm_sq.get_d());
}

bool contains_subgroup(const LieAlgebra&, const SubgroupData& big, const SubgroupData& small) {
  auto basis = span_basis(big.algebra);
  for (const auto& v : small.algebra)
    if (!in_span(basis, v)) return false;
  return true;
}

namespace {

std::vector<std::size_t> containing(const SubgroupFamily& fam, const SubgroupData& m) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fam.size(); ++i)
    if (contains_subgroup(*fam.algebra, fam.members[i].subgroup, m)) out.push_back(i);
  return out;
}

}  // namespace

ExhaustivenessReport exhaustiveness_check(const SubgroupFamily& reference, const SubgroupFamily& candidate,
                                          const SubgroupData& m, double A, double C,
                                          const std::vector<double>& T_grid) {
  ExhaustivenessReport rep;
  auto refs = containing(reference, m);
  auto cands = containing(candidate, m);
  double best = std::numeric_limits<double>::infinity();
  for (auto j : cands) best = std::min(best, candidate.members[j].height);
  for (double T : T_grid)
    for (auto i : refs) {
      double h = reference.members[i].height;
      if (h > T) continue;
      ++rep.checked;
      if (!(best <= C * std::pow(T, A))) rep.violations.push_back({T, i, h, best});
    }
  rep.passed = rep.violations.empty();
  return rep;
}

ExhaustivenessFit fit_exhaustiveness(const SubgroupFamily& reference, const SubgroupFamily& candidate,
                                     const SubgroupData& m) {
  ExhaustivenessFit fit;
  auto refs = containing(reference, m);
  auto cands = containing(candidate, m);
  double best = std::numeric_limits<double>::infinity();
  for (auto j : cands) best = std::min(best, candidate.members[j].height);
  std::vector<double> lx, ly;
  for (auto i : refs) {
    if (!std::isfinite(best)) {
      fit.complete = false;
      continue;
    }
    lx.push_back(std::log(reference.members[i].height));
    ly.push_back(std::log(best));
  }
  fit.pairs = lx.size();
  if (lx.size() >= 2) {
    double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / lx.size();
    double my = std::accumulate(ly.begin(), ly.end(), 0.0) / ly.size();
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      sxx += (lx[i] - mx) * (lx[i] - mx);
      sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (sxx > 1e-12) fit.A = std::max(1.0, sxy / sxx);
  }
  fit.C = 1;
  for (std::size_t i = 0; i < lx.size(); ++i) fit.C = std::max(fit.C, std::exp(ly[i] - fit.A * lx[i]) * (1 + 1e-12));
  return fit;
}

}  // namespace orbitlab
