#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "orbitlab/errors.hpp"
#include "orbitlab/experiments.hpp"
#include "unit/generators.hpp"

using namespace orbitlab;

namespace {

const RationalMatrix kQ22 = RationalMatrix::diagonal({1, 1, -1, -1});

Budgets small_budgets(std::size_t samples) {
  Budgets b;
  b.samples = samples;
  b.invariance_samples = 300;
  return b;
}

// Integral within a tolerance relative to the largest entry, with the rounded matrix returned.
bool nearly_integral(const Matrix& m, Matrix* rounded = nullptr) {
  Matrix r = m.array().round().matrix();
  if (rounded) *rounded = r;
  return (m - r).cwiseAbs().maxCoeff() < 1e-9 * std::max(1.0, m.cwiseAbs().maxCoeff() * m.cwiseAbs().maxCoeff());
}

RationalMatrix rational_sl2(std::mt19937_64& rng) {
  RationalMatrix lower{{1, 0}, {gen::small_rational(rng, 3, 3), 1}};
  RationalMatrix upper{{1, gen::small_rational(rng, 3, 3)}, {0, 1}};
  Rational d = gen::small_rational(rng, 3, 3);
  if (d == 0) d = 2;
  return lower * RationalMatrix{{d, 0}, {0, 1 / d}} * upper;
}

// ψ(n) = n·Π_{p | n}(1 + 1/p), by trial division.
long dedekind_psi(long n) {
  Rational out = n;
  long m = n;
  for (long p = 2; p * p <= m; ++p)
    if (m % p == 0) {
      out *= Rational(p + 1, p);
      while (m % p == 0) m /= p;
    }
  if (m > 1) out *= Rational(m + 1, m);
  return out.get_num().get_si();
}

}  // namespace

TEST_SUITE("experiments_cli") {
  TEST_CASE("flagship scenario construction") {
    auto sc = scenario_so(kQ22, {{1, 0, 0, 0}}, 1, small_budgets(100), 1);
    const LieAlgebra& so = *sc.orbit.quotient.algebra();
    CHECK(sc.orbit.h_algebra.size() == 3);
    CHECK(so.is_subalgebra(sc.orbit.h_algebra));
    for (const auto& h : sc.orbit.h_algebra) CHECK((so.element(h) * RationalVector{1, 0, 0, 0}) == RationalVector(4, 0));
    CHECK(min_vector_proxy({{3, 4, 0, 0}}, &kQ22) == doctest::Approx(5));

    // Exact kernel oracle: solve Xv = 0 over the coordinates of 𝔰𝔬_Q directly.
    for (const RationalVector& v : {RationalVector{3, 4, 0, 0}, RationalVector{2, 1, 0, 0}}) {
      auto s = scenario_so(kQ22, {v}, 1, small_budgets(10), 1);
      RationalMatrix a(4, so.dim());
      for (std::size_t j = 0; j < so.dim(); ++j) {
        RationalVector col = so.basis(j) * v;
        for (std::size_t i = 0; i < 4; ++i) a(i, j) = col[i];
      }
      auto ker = kernel(a);
      CHECK(ker.size() == s.orbit.h_algebra.size());
      for (const auto& k : ker) CHECK(in_span(s.orbit.h_algebra, k));
    }

    auto t = find_sl2_triple(so, sc.orbit.h_algebra);
    REQUIRE(t.has_value());
    CHECK(so.bracket(t->h, t->z) == scale(t->z, 2));
    CHECK(so.bracket(t->h, t->f) == scale(t->f, -2));
    CHECK(so.bracket(t->z, t->f) == t->h);
    CHECK(sc.orbit.z == t->z);

    CHECK_THROWS_AS(scenario_so(RationalMatrix::identity(4), {{1, 0, 0, 0}}, 1, {}, 1), DomainError);
    CHECK_THROWS_AS(scenario_so(kQ22, {{0, 0, 1, 0}}, 1, {}, 1), DomainError);
    CHECK_THROWS_AS(scenario_so(kQ22, {{1, 0, 0, 0}, {0, 1, 0, 0}}, 1, {}, 1), DomainError);
    CHECK_THROWS_AS(scenario_so(RationalMatrix::diagonal({1, 1, -1}), {{1, 0, 0}}, 1, {}, 1), DomainError);
  }

  TEST_CASE("sl2 triples for the flagship family") {
    auto so = build_so_Q(kQ22);
    for (long k : {1, 2, 3, 5, 8, 13}) {
      auto h = pointwise_stabilizer(*so, {{k, 1, 0, 0}}).algebra;
      auto t = find_sl2_triple(*so, h);
      REQUIRE(t.has_value());
      CHECK(in_span(h, t->z));
      CHECK(in_span(h, t->f));
      CHECK(so->bracket(t->h, t->z) == scale(t->z, 2));
      CHECK(so->bracket(t->h, t->f) == scale(t->f, -2));
    }
    CHECK_FALSE(find_sl2_triple(*so, {{0, 0, 0, 0, 0, 1}}).has_value());
  }

  TEST_CASE("orbit samples stay on the orbit") {
    auto sc = scenario_so(kQ22, {{1, 0, 0, 0}}, 1, small_budgets(10), 5);
    auto one = sample_H_orbit(sc, 1);
    REQUIRE(one.size() == 1);
    CHECK((one[0] - reduce_point(sc.orbit.g)).norm() == 0);

    std::vector<Matrix> words;
    auto pts = sample_H_orbit(sc, 200, &words);
    REQUIRE(words.size() == pts.size());
    const Matrix q = kQ22.to_double();
    const Vector e1 = Vector::Unit(4, 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      // Word in H: fixes e₁ and preserves Q.
      CHECK((words[i] * e1 - e1).norm() < 1e-9);
      CHECK((words[i].transpose() * q * words[i] - q).norm() < 1e-8);
      // Reduction only multiplies on the left by SL₄(ℤ).
      Matrix gamma;
      CHECK(nearly_integral(pts[i] * (sc.orbit.g * words[i]).inverse(), &gamma));
      CHECK(std::abs(gamma.determinant() - 1) < 1e-9);
    }
    auto again = sample_H_orbit(sc, 200);
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK((again[i] - pts[i]).norm() == 0);

    Scenario too_few = sc;
    too_few.orbit.directions.resize(1);
    CHECK_THROWS_AS(sample_H_orbit(too_few, 5), DomainError);
  }

  TEST_CASE("orbit averages stabilize under doubling") {
    auto sc = scenario_sl2({{1, 0, 0}, {0, 1, 0}}, closed_horocycle_point(1.05), small_budgets(10), 3);
    const auto& f = sc.battery.front();
    auto pts = sample_H_orbit(sc, 8000);
    auto stats = [&](std::size_t n) {
      double s = 0, s2 = 0;
      for (std::size_t i = 0; i < n; ++i) {
        double v = evaluate(f, pts[i]);
        s += v;
        s2 += v * v;
      }
      double mean = s / n;
      return std::pair{mean, std::sqrt(std::max(0.0, s2 / n - mean * mean) / n)};
    };
    auto [m1, e1] = stats(2000);
    auto [m2, e2] = stats(4000);
    auto [m3, e3] = stats(8000);
    CHECK(std::abs(m2 - m1) <= 4 * e1);
    CHECK(std::abs(m3 - m2) <= 4 * e2);
    CHECK(e3 < e1);
  }

  TEST_CASE("numeric lie closure") {
    auto sl2 = build_sl2();
    bool exact = false;
    Vector z(3);
    z << 1e-12, 2e-12, 1.0;
    auto all = numeric_lie_closure(*sl2, {{1, 0, 0}}, z, 1e-6, &exact);
    CHECK(exact);
    CHECK(all.size() == 3);

    Vector h(3);
    h << 0.5, 3.0, 1e-13;
    auto borel = numeric_lie_closure(*sl2, {{1, 0, 0}}, h, 1e-6, &exact);
    CHECK(exact);
    CHECK(borel.size() == 2);
    CHECK(in_span(borel, {0, 1, 0}));

    // Borel of a stabilizer triple plus the missing direction gives the stabilizer.
    auto so = build_so_Q(kQ22);
    auto stab = pointwise_stabilizer(*so, {{1, 1, 0, 0}}).algebra;
    auto t = find_sl2_triple(*so, stab);
    REQUIRE(t.has_value());
    auto grown = numeric_lie_closure(*so, {t->z, t->h}, to_double(t->f) * 0.37, 1e-6, &exact);
    CHECK(exact);
    CHECK(grown.size() == 3);
    for (const auto& v : stab) CHECK(in_span(grown, v));
  }

  TEST_CASE("chain dimensions strictly increase") {
    Budgets b = small_budgets(6000);
    auto sc = with_transversal_offset(scenario_so(kQ22, {{1, 0, 0, 0}}, 1, b, 2), 0.1);
    auto rep = accumulate_invariance(sc);
    auto dims = rep.dims();
    REQUIRE_FALSE(dims.empty());
    CHECK(dims.front() == 3);
    for (std::size_t i = 1; i < dims.size(); ++i) CHECK(dims[i] > dims[i - 1]);
    CHECK(dims.back() <= rep.dim_g);
    CHECK(rep.steps.size() <= rep.dim_g);
    CHECK(rep.summary().find("dims 3") == 0);
  }

  TEST_CASE("scenario lock round trip") {
    auto sc = planted_borel(scenario_so(kQ22, {{1, 1, 0, 0}}, 1, small_budgets(50), 9), 0.5);
    sc.ledger.set("eta0", 0.2);
    const std::string text = write_config(sc.to_config());
    Scenario back = Scenario::from_config(parse_config(text));
    CHECK(write_config(back.to_config()) == text);
    CHECK(back.orbit.h_algebra == sc.orbit.h_algebra);
    CHECK(back.ledger.get("eta0") == 0.2);
    auto a = sample_H_orbit(sc, 50), b = sample_H_orbit(back, 50);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK((a[i] - b[i]).norm() == 0);
    CHECK(battery_hash(back.battery) == battery_hash(sc.battery));

    ConfigDoc broken = sc.to_config();
    broken["orbit"]["h_algebra"] = "[[1, 0, 0, 0, 0, 0], [0, 1, 0, 0, 0, 0]]";
    CHECK_THROWS_AS(Scenario::from_config(broken), DomainError);
  }

  TEST_CASE("split form embedding") {
    std::mt19937_64 rng(17);
    const RationalMatrix J{{0, 1}, {-1, 0}};
    for (int trial = 0; trial < 30; ++trial) {
      auto a = rational_sl2(rng), b = rational_sl2(rng), a2 = rational_sl2(rng), b2 = rational_sl2(rng);
      auto p = split_form_embedding(a, b);
      CHECK(p.transpose() * kQ22 * p == kQ22);
      CHECK(determinant(p) == 1);
      CHECK(split_form_embedding(a * a2, b * b2) == p * split_form_embedding(a2, b2));
      CHECK((split_form_embedding(a.to_double(), b.to_double()) - p.to_double()).norm() < 1e-12);
    }
    for (long k : {1, 2, 3, 5, 8}) {
      RationalVector v{k, 1, 0, 0};
      auto c = hecke_twist(v);
      CHECK(determinant(c) == k * k + 1);
      CHECK(content(c.flat()) == 1);
      for (int trial = 0; trial < 10; ++trial) {
        auto a = rational_sl2(rng);
        CHECK(split_form_embedding(a, c * a * inverse(c)) * v == v);
      }
    }
    CHECK_THROWS_AS(hecke_twist({0, 0, 1, 0}), DomainError);
    CHECK(is_split_form(kQ22));
    CHECK_FALSE(is_split_form(RationalMatrix::diagonal({1, 1, 1, -1})));
  }

  TEST_CASE("hecke representatives") {
    for (long n : {1, 2, 4, 5, 6, 10, 65}) {
      auto reps = hecke_representatives(n);
      CHECK(static_cast<long>(reps.size()) == dedekind_psi(n));
      for (std::size_t i = 0; i < reps.size(); ++i) {
        CHECK(determinant(reps[i]) == n);
        CHECK(content(reps[i].flat()) == 1);
        // Distinct left cosets of SL₂(ℤ): h_i h_j⁻¹ is never integral.
        for (std::size_t j = 0; j < i; ++j) CHECK_FALSE(is_integral((reps[i] * inverse(reps[j])).flat()));
      }
    }
  }

  TEST_CASE("rank correlation and power fit") {
    CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1));
    CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1));
    // Ties take average ranks: ranks (1, 2.5, 2.5, 4) against (1, 2, 3, 4).
    CHECK(spearman({1, 2, 3, 4}, {1, 5, 5, 9}) == doctest::Approx(4.5 / std::sqrt(5.0 * 4.5)));
    std::vector<double> x{1, 2, 4, 8, 16}, y;
    for (double v : x) y.push_back(3 * std::pow(v, -2.0));
    auto fit = power_law_fit(x, y);
    CHECK(fit.slope == doctest::Approx(-2));
    CHECK(std::exp(fit.intercept) == doctest::Approx(3));
    CHECK(fit.low <= fit.slope);
    CHECK(fit.high >= fit.slope);
    CHECK_THROWS_AS(power_law_fit({1, 2}, {1, 2}), DomainError);
  }

  TEST_CASE("equidistribution report plumbing") {
    auto templ = scenario_so(kQ22, {{1, 0, 0, 0}}, 1, small_budgets(10), 4);
    auto opt = default_equidistribution_options(2, 2);
    opt.samples = 1500;
    std::vector<std::vector<RationalVector>> fam{{{1, 1, 0, 0}}, {{3, 4, 0, 0}}, {{2, 1, 0, 0}}, {{2, 1, 0, 0}},
                                                 {{3, 1, 0, 0}}};
    auto rep = equidistribution_experiment(fam, templ, opt);
    REQUIRE(rep.rows.size() == 5);
    for (std::size_t i = 1; i < rep.rows.size(); ++i) CHECK(rep.rows[i - 1].proxy <= rep.rows[i].proxy);
    for (const auto& r : rep.rows) CHECK(r.proxy == doctest::Approx(min_vector_proxy(fam[r.orbit_id], &kQ22)));
    // The duplicated member: adjacent rows after sorting, identical values.
    const RateRow* dup[2];
    int found = 0;
    for (const auto& r : rep.rows)
      if (r.orbit_id == 2 || r.orbit_id == 3) dup[found++] = &r;
    REQUIRE(found == 2);
    CHECK(dup[0]->mean_abs_disc == dup[1]->mean_abs_disc);
    CHECK(dup[0]->stderr_ == dup[1]->stderr_);
    CHECK(dup[0]->theta == dup[1]->theta);
    CHECK(rep.slope.has_value());
    CHECK(rep.csv().rfind("orbit_id,proxy,theta,mean_abs_disc,stderr\n", 0) == 0);

    std::vector<std::vector<RationalVector>> thin{{{1, 1, 0, 0}}, {{1, 1, 0, 0}}, {{2, 1, 0, 0}}, {{3, 1, 0, 0}}};
    CHECK_THROWS_AS(equidistribution_experiment(thin, templ, opt), DomainError);
  }

  TEST_CASE("closing experiment guard and planted point") {
    const RationalVector E{1, 0, 0}, H{0, 1, 0}, F{0, 0, 1};
    auto sc = scenario_sl2({E, H}, Matrix::Identity(2, 2), small_budgets(10), 1);
    auto fam = custom_family(sc.orbit.quotient.algebra(), {{{E}, "N"}, {{E, H}, "B"}});
    auto rep = closing_lemma_experiment(sc, {{"borel", {E, H}}, {"all", {E, H, F}}}, {50},
                                        {{"planted", closed_horocycle_point(5)}}, fam, 0.1);
    REQUIRE(rep.rows.size() == 2);
    CHECK(rep.rows[0].error.empty());
    CHECK(rep.rows[0].fired);
    CHECK_FALSE(rep.rows[0].diophantine);
    CHECK(rep.rows[0].intermediate == "N");
    // disc(N, g) = ‖Ad(g⁻¹)E‖ = ‖E‖/y for g = diag(√y, 1/√y).
    CHECK(rep.rows[0].theta == doctest::Approx(2.0 / 5));
    CHECK(rep.rows[1].error.find("ideal") != std::string::npos);
  }

  TEST_CASE("numeric theta agrees with the exact one at rational points") {
    auto so = build_so_Q(kQ22);
    auto fam = enumerate_stabilizers(so, kQ22, 3.5);
    auto h = pointwise_stabilizer(*so, {{1, 1, 0, 0}}).algebra;
    std::mt19937_64 rng(23);
    auto nil = gen::small_nilpotents(*so);
    for (int trial = 0; trial < 5; ++trial) {
      RationalMatrix g = gen::group_word(rng, nil, 2);
      auto exact = theta(h, g, fam);
      auto approx = numeric_theta(*so, h, g.to_double(), fam);
      CHECK(exact.member == approx.member);
      if (exact.member) CHECK(approx.value == doctest::Approx(exact.value).epsilon(1e-9));
    }
  }
}
