#include <doctest.h>

#include <random>

#include "orbitlab/diophantine.hpp"
#include "orbitlab/errors.hpp"
#include "unit/generators.hpp"
#include "unit/oracles.hpp"

using namespace orbitlab;

namespace {

const RationalMatrix kQ22 = RationalMatrix::diagonal({1, 1, -1, -1});

RationalVector e(std::size_t n, std::size_t i) {
  RationalVector v(n, Rational(0));
  v[i] = 1;
  return v;
}

// Nilpotent element of so(2,2) killing e1.
RationalVector nilpositive_fixing_e1(const LieAlgebra& so) {
  auto h = pointwise_stabilizer(so, {e(4, 0)});
  for (const auto& x : gen::small_nilpotents(so)) {
    auto c = so.coordinates(x);
    if (in_span(h.algebra, c)) return c;
  }
  throw std::runtime_error("no nilpotent found");
}

}  // namespace

TEST_SUITE("diophantine") {
  TEST_CASE("psi closed form and monotonicity") {
    ConstantLedger ledger;
    CHECK(ledger.get("C4") == 10);
    CHECK(ledger.get("A4") == 2);
    CHECK(psi(1.0, 0.1, ledger) == doctest::Approx(1e-3));
    CHECK(psi(2.0, 0.1, ledger) < psi(1.0, 0.1, ledger));
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.01, 50);
    for (int i = 0; i < 200; ++i) {
      double s = u(rng), eta = 0.49 * u(rng) / 50;
      CHECK(psi(s, eta, ledger) == doctest::Approx(std::pow(eta / s, 2) / 10).epsilon(1e-14));
    }
    CHECK_THROWS_AS(psi(1.0, 0.5, ledger), DomainError);
    CHECK_THROWS_AS(psi(1.0, 0.0, ledger), DomainError);
    CHECK_THROWS_AS(psi(0.0, 0.1, ledger), DomainError);
    std::vector<double> grid;
    for (int i = 0; i < 10; ++i) grid.push_back(std::pow(10.0, -2 + 0.5 * i));
    CHECK(psi_within_avoidance_bound(0.1, ledger, grid));
    ledger.set("C3", 100);
    ledger.set("A3", 3);
    CHECK_FALSE(psi_within_avoidance_bound(0.1, ledger, grid));
  }

  TEST_CASE("ledger derives K and flags overrides") {
    ConstantLedger ledger;
    CHECK(ledger.get("K") == 60);
    CHECK_FALSE(ledger.K_overridden());
    ledger.set("p_G", 3);
    CHECK(ledger.get("K") == 80);
    ledger.set("K", 2);
    CHECK(ledger.K_overridden());
    CHECK(ledger.flags().size() == 1);
    ledger.set("p_G", 4);
    CHECK(ledger.get("K") == 2);
    CHECK_THROWS_AS(ledger.set("C1", -1), DomainError);
    CHECK_THROWS_AS(ledger.get("nope"), DomainError);
    auto parsed = ConstantLedger::parse("[ledger]\nK = 2\np_G = 2\nA4 = 3 # comment\n");
    CHECK(parsed.get("K") == 2);
    CHECK(parsed.K_overridden());
    CHECK(parsed.get("A4") == 3);
    CHECK(ConstantLedger::parse(parsed.str()).values() == parsed.values());
  }

  TEST_CASE("stabilizer enumeration examples") {
    auto so = build_so_Q(kQ22);
    auto fam = enumerate_stabilizers(so, kQ22, 1.0, {e(4, 0)});
    REQUIRE(fam.size() == 1);
    CHECK(fam.members[0].subgroup.dimension() == 3);
    CHECK(*fam.members[0].vector == e(4, 0));
    CHECK_THROWS_AS(enumerate_stabilizers(so, kQ22, 0.5, {e(4, 0)}), DomainError);
    RationalVector v{3, 4, 0, 0};
    CHECK(primitive_integral(v) == v);
    CHECK(quadratic_value(kQ22, v) == 25);
    auto fam5 = enumerate_stabilizers(so, kQ22, 5.0, {v});
    REQUIRE(fam5.size() == 1);
    CHECK(*fam5.members[0].vector == v);
    // Every member's algebra annihilates its vector and is bracket-closed.
    for (const auto& m : enumerate_stabilizers(so, kQ22, 2.0).members) {
      CHECK(so->is_subalgebra(m.subgroup.algebra));
      for (const auto& x : m.subgroup.algebra) CHECK(is_zero(so->element(x) * *m.vector));
      CHECK(m.wedge.check_primitive());
    }
  }

  TEST_CASE("family size matches brute-force vector count") {
    auto so = build_so_Q(kQ22);
    for (double bound : {1.0, 2.0, 2.5, 3.0}) {
      // Count primitive v up to sign with |v| ≤ bound and Q(v) ≠ 0.
      int count = 0;
      const int r = static_cast<int>(bound);
      for (int a = -r; a <= r; ++a)
        for (int b = -r; b <= r; ++b)
          for (int c = -r; c <= r; ++c)
            for (int d = -r; d <= r; ++d) {
              if (a * a + b * b + c * c + d * d > bound * bound) continue;
              if (std::gcd(std::gcd(std::abs(a), std::abs(b)), std::gcd(std::abs(c), std::abs(d))) != 1) continue;
              if (a * a + b * b - c * c - d * d == 0) continue;
              ++count;
            }
      CHECK(enumerate_stabilizers(so, kQ22, bound).size() == static_cast<std::size_t>(count / 2));
    }
  }

  TEST_CASE("normal factors of a product") {
    auto pair = build_sl2_pair();
    auto fam = normal_factors(pair);
    REQUIRE(fam.size() == 2);
    for (const auto& m : fam.members) {
      CHECK(m.subgroup.dimension() == 3);
      CHECK(pair->is_ideal(m.subgroup.algebra));
    }
    auto so = build_so_Q(kQ22);
    auto fso = normal_factors(so);
    CHECK(fso.size() == 2);
    CHECK(normal_factors(build_sl(3)).size() == 0);
  }

  TEST_CASE("diophantine examples") {
    auto so = build_so_Q(kQ22);
    ConstantLedger ledger;
    RationalVector z = nilpositive_fixing_e1(*so);
    auto fam = enumerate_stabilizers(so, kQ22, 1.0, {e(4, 0)});
    const double ht = fam.members[0].height;
    Matrix id = Matrix::Identity(4, 4);
    // M_{e1} contains z: the wedge vanishes, so it is a witness below the cutoff.
    auto below = is_diophantine(id, to_double(z), 0.1, ht * 1.01, fam, ledger);
    CHECK_FALSE(below.verdict);
    REQUIRE(below.witnesses.size() == 1);
    CHECK(below.witnesses[0].transversal == doctest::Approx(0.0));
    CHECK(below.witnesses[0].eta_norm == doctest::Approx(ht));
    CHECK(below.scope.find("family") != std::string::npos);
    // Above the cutoff nothing counts.
    auto above = is_diophantine(id, to_double(z), 0.1, ht * 0.99, fam, ledger);
    CHECK(above.verdict);
    CHECK(above.witnesses.empty());
    SubgroupFamily empty;
    empty.algebra = so;
    CHECK_THROWS_AS(is_diophantine(id, to_double(z), 0.1, 10, empty, ledger), DomainError);
  }

  TEST_CASE("diophantine verdict agrees with a full-family volume scan") {
    auto so = build_so_Q(kQ22);
    ConstantLedger ledger;
    ledger.set("C4", 0.5);  // a generous ψ so that both outcomes occur
    Vector z = to_double(nilpositive_fixing_e1(*so));
    auto fam = enumerate_stabilizers(so, kQ22, 3.0);
    oracle::DiophantineScan scan(fam);
    auto nil = gen::small_nilpotents(*so);
    std::mt19937_64 rng(32);
    int fails = 0;
    for (int trial = 0; trial < 50; ++trial) {
      Matrix g = gen::group_word(rng, nil, 1 + trial % 4).to_double();
      double T = 20.0 + 40.0 * (trial % 5);
      auto rep = is_diophantine(g, z, 0.2, T, fam, ledger);
      auto want = scan.witnesses(g, z, 0.2, T, ledger);
      std::vector<std::size_t> got;
      for (const auto& w : rep.witnesses) got.push_back(w.member);
      CHECK(got == want);
      CHECK(rep.verdict == want.empty());
      for (const auto& w : rep.witnesses) {
        CHECK(w.eta_norm < T);
        CHECK(w.transversal < w.threshold);
      }
      // Monotone in T.
      if (rep.verdict) CHECK(is_diophantine(g, z, 0.2, T / 2, fam, ledger).verdict);
      fails += !rep.verdict;
    }
    CHECK(fails > 0);
    CHECK(fails < 50);
  }

  TEST_CASE("theta over stabilizers of a positive line") {
    auto so = build_so_Q(kQ22);
    RationalVector v{2, 1, 0, 0};
    auto h = pointwise_stabilizer(*so, {v});
    auto fam = enumerate_stabilizers(so, kQ22, 5.0, {v});
    auto th = theta(h.algebra, RationalMatrix::identity(4), fam);
    REQUIRE(th.member.has_value());
    CHECK(th.value == doctest::Approx(fam.members[*th.member].height));
    CHECK(*fam.members[*th.member].vector == v);
    // No intermediate member: +∞.
    auto other = enumerate_stabilizers(so, kQ22, 1.0, {e(4, 0)});
    CHECK(std::isinf(theta(h.algebra, RationalMatrix::identity(4), other).value));
    // Enlarging the family never increases theta.
    auto small = enumerate_stabilizers(so, kQ22, 2.0);
    auto big = enumerate_stabilizers(so, kQ22, 3.0);
    std::mt19937_64 rng(33);
    auto nil = gen::small_nilpotents(*so);
    for (int trial = 0; trial < 5; ++trial) {
      auto g = gen::group_word(rng, nil, 2);
      auto hv = pointwise_stabilizer(*so, {e(4, trial % 2)});
      CHECK(theta(hv.algebra, g, big).value <= theta(hv.algebra, g, small).value);
    }
    // Intermediate test agrees with transporting generators.
    auto g = gen::group_word(rng, nil, 2);
    RationalMatrix gi = inverse(g);
    for (const auto& m : small.members) {
      bool direct = true;
      for (const auto& x : h.algebra) {
        RationalMatrix moved = g * so->element(x) * gi;
        direct = direct && is_zero(moved * *m.vector);
      }
      CHECK(is_intermediate(*so, h.algebra, g, m.subgroup) == direct);
    }
  }

  TEST_CASE("min vector proxy") {
    CHECK(min_vector_proxy({e(4, 0)}) == doctest::Approx(1.0));
    CHECK(min_vector_proxy({{3, 4, 0, 0}}) == doctest::Approx(5.0));
    CHECK(min_vector_proxy({{Rational(3, 7), Rational(4, 7), 0, 0}}, &kQ22) == doctest::Approx(5.0));
    CHECK_THROWS_AS(min_vector_proxy({{0, 0, 1, 0}}, &kQ22), DomainError);
    std::mt19937_64 rng(34);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<RationalVector> L{gen::integer_vector(rng, 4, 3), gen::integer_vector(rng, 4, 3)};
      if (span_basis(L).size() != 2) continue;
      double got = min_vector_proxy(L);
      // Box search over ℤ⁴ restricted to L.
      const int r = static_cast<int>(std::ceil(got));
      double best = 1e300;
      for (int a = -r; a <= r; ++a)
        for (int b = -r; b <= r; ++b)
          for (int c = -r; c <= r; ++c)
            for (int d = -r; d <= r; ++d) {
              if (!a && !b && !c && !d) continue;
              RationalVector x{a, b, c, d};
              if (in_span(L, x)) best = std::min(best, std::sqrt(double(a * a + b * b + c * c + d * d)));
            }
      CHECK(got == doctest::Approx(best));
    }
  }

  TEST_CASE("exhaustiveness") {
    auto so = build_so_Q(kQ22);
    auto fam = enumerate_stabilizers(so, kQ22, 2.0);
    auto m = pointwise_stabilizer(*so, {e(4, 0)});
    auto same = exhaustiveness_check(fam, fam, m, 1, 1, {10, 50, 100});
    CHECK(same.passed);
    CHECK(same.checked > 0);
    SubgroupFamily empty;
    empty.algebra = so;
    CHECK(exhaustiveness_check(empty, fam, m, 1, 1, {10, 100}).passed);
    // A candidate family with no member containing M fails wherever the reference has one.
    auto unrelated = enumerate_stabilizers(so, kQ22, 1.0, {e(4, 1)});
    auto bad = exhaustiveness_check(fam, unrelated, m, 1, 1, {100});
    CHECK_FALSE(bad.passed);
    auto fit = fit_exhaustiveness(fam, fam, m);
    CHECK(fit.complete);
    CHECK(exhaustiveness_check(fam, fam, m, fit.A, fit.C, {10, 50, 100}).passed);
  }
}
