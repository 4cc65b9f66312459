// orbitlab command-line driver. Every subcommand reads a key-value config,
// writes report.jsonl (and summary.csv / scenario.lock where relevant) to --out.

#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <random>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "orbitlab/diophantine.hpp"
#include "orbitlab/errors.hpp"
#include "orbitlab/experiments.hpp"
#include "orbitlab/flow.hpp"

namespace {

using namespace orbitlab;
using json = nlohmann::json;

constexpr int kUsage = 64;

struct Run {
  std::string command;
  ConfigDoc config;
  std::optional<std::uint64_t> seed;
  std::optional<ConstantLedger> ledger;
};

struct Result {
  std::string stdout_text;
  std::string report;  // jsonl
  std::optional<std::string> csv;
  ConfigDoc lock;  // config sections needed to replay
};

const std::string& need(const ConfigDoc& doc, const std::string& section, const std::string& key) {
  auto s = doc.find(section);
  if (s == doc.end() || !s->second.count(key)) throw DomainError("config: missing " + section + "." + key);
  return s->second.at(key);
}

std::string get_or(const ConfigDoc& doc, const std::string& section, const std::string& key, const std::string& dflt) {
  auto s = doc.find(section);
  if (s == doc.end()) return dflt;
  auto it = s->second.find(key);
  return it == s->second.end() ? dflt : it->second;
}

std::uint64_t seed_of(const Run& run, const std::string& section) {
  if (run.seed) return *run.seed;
  return std::stoull(get_or(run.config, section, "seed", "1"));
}

ConstantLedger ledger_of(const Run& run) {
  ConstantLedger l;
  if (auto s = run.config.find("ledger"); s != run.config.end())
    for (const auto& [k, v] : s->second) l.set(k, parse_number(v));
  if (run.ledger)
    for (const auto& [k, v] : run.ledger->values())
      if (k != "K" || run.ledger->K_overridden()) l.set(k, v);
  return l;
}

void put_ledger(ConfigDoc& doc, const ConstantLedger& l) {
  auto& sec = doc["ledger"];
  sec.clear();
  for (const auto& [k, v] : l.values())
    if (k != "K" || l.K_overridden()) sec[k] = format_double(v);
}

AlgebraPtr algebra_of(const ConfigDoc& doc) {
  const std::string name = need(doc, "algebra", "name");
  if (name == "sl2") return build_sl2();
  if (name == "sl2_pair") return build_sl2_pair();
  if (name == "so") return build_so_Q(parse_rational_matrix(need(doc, "algebra", "form")));
  if (name.rfind("sl", 0) == 0) {
    const long n = std::stol(name.substr(2));
    if (n < 2 || n > 6) throw DomainError("algebra: sl_n needs 2 <= n <= 6");
    return build_sl(static_cast<std::size_t>(n));
  }
  throw DomainError("algebra: unknown name " + name);
}

json wedge_json(const WedgeVector& w) {
  json out = json::object();
  for (const auto& [s, q] : w.coords()) {
    std::string key;
    for (std::size_t i = 0; i < s.size(); ++i) key += (i ? "^" : "") + std::to_string(s[i]);
    out[key] = q.get_str();
  }
  return out;
}

// ---- algebra-check ----

Result cmd_algebra_check(const Run& run) {
  auto alg = algebra_of(run.config);
  const long cases = std::stol(get_or(run.config, "check", "cases", "1000"));
  const std::uint64_t seed = seed_of(run, "check");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> num(-6, 6), den(1, 4);
  auto rational = [&] {
    Rational q(num(rng), den(rng));
    q.canonicalize();
    return q;
  };
  auto element = [&] {
    RationalVector v(alg->dim());
    for (auto& x : v) x = rational();
    return v;
  };
  std::vector<RationalMatrix> nil;
  for (const auto& b : alg->basis())
    if (is_nilpotent(b)) nil.push_back(b);
  if (nil.empty()) throw DomainError("algebra-check: no nilpotent basis element");
  std::uniform_int_distribution<std::size_t> pick(0, nil.size() - 1);
  auto group = [&] {
    RationalMatrix g = RationalMatrix::identity(alg->matrix_size());
    for (int i = 0; i < 3; ++i) g = g * exp_nilpotent(nil[pick(rng)] * rational());
    return g;
  };
  long jacobi = 0, hom = 0, inverse_ok = 0, flow = 0;
  for (long c = 0; c < cases; ++c) {
    auto x = element(), y = element(), z = element();
    auto j = add(add(alg->bracket(x, alg->bracket(y, z)), alg->bracket(y, alg->bracket(z, x))),
                 alg->bracket(z, alg->bracket(x, y)));
    jacobi += is_zero(j);
    auto g1 = group(), g2 = group();
    hom += alg->adjoint_matrix(g1 * g2) == alg->adjoint_matrix(g1) * alg->adjoint_matrix(g2);
    RationalMatrix n = nil[pick(rng)] * rational();
    inverse_ok += exp_nilpotent(n) * exp_nilpotent(-n) == RationalMatrix::identity(alg->matrix_size());
    Rational s = rational(), t = rational();
    flow += exp_nilpotent(n * s) * exp_nilpotent(n * t) == exp_nilpotent(n * (s + t));
  }
  Result r;
  json rec{{"kind", "algebra_check"}, {"algebra", alg->name()}, {"cases", cases},     {"seed", seed},
           {"jacobi", jacobi},        {"ad_homomorphism", hom}, {"exp_inverse", inverse_ok}, {"one_parameter", flow}};
  r.report = rec.dump() + "\n";
  const bool ok = jacobi == cases && hom == cases && inverse_ok == cases && flow == cases;
  r.stdout_text = std::string(ok ? "PASS" : "FAIL") + " algebra-check " + alg->name() + " cases=" +
                  std::to_string(cases) + "\n";
  r.lock = run.config;
  r.lock["check"]["seed"] = std::to_string(seed);
  if (!ok) throw DomainError("algebra-check: identity failed\n" + r.report);
  return r;
}

// ---- disc ----

Result cmd_disc(const Run& run) {
  auto alg = algebra_of(run.config);
  SubgroupData m{parse_rational_vectors(need(run.config, "subgroup", "algebra")),
                 get_or(run.config, "subgroup", "label", "M")};
  validate_subgroup(*alg, m);
  RationalMatrix g = parse_rational_matrix(need(run.config, "point", "g"));
  if (determinant(g) != 1) throw DomainError("disc: g must have determinant one");
  WedgeVector v = wedge_basis_vector(m, alg->dim());
  WedgeVector eta = orbit_map(*alg, m, g);
  const double d = discriminant(*alg, m, g);
  Result r;
  std::ostringstream os;
  os << "subgroup " << m.label << "\n";
  os << "dimension " << span_basis(m.algebra).size() << "\n";
  os << "v_M " << v.str() << "\n";
  os << "eta_M " << eta.str() << "\n";
  os << "disc " << format_double(d) << "\n";
  r.stdout_text = os.str();
  r.report = json{{"kind", "disc"}, {"label", m.label}, {"v_M", wedge_json(v)}, {"eta_M", wedge_json(eta)}, {"disc", d}}
                 .dump() +
             "\n";
  r.lock = run.config;
  return r;
}

// ---- height ----

Result cmd_height(const Run& run) {
  auto alg = algebra_of(run.config);
  const std::string raw = need(run.config, "point", "g");
  std::optional<RationalMatrix> exact;
  try {
    exact = parse_rational_matrix(raw);
  } catch (const DomainError&) {
  }
  HeightReport h = exact ? height_in_cusp(*alg, *exact) : height_in_cusp(*alg, parse_matrix(raw));
  Result r;
  json rec{{"kind", "height"}, {"height", h.height},       {"certified", h.certified},
           {"lower", h.height_lower}, {"upper", h.height_upper}, {"nodes", h.nodes}};
  if (h.shortest_exact) rec["shortest"] = vector_string(*h.shortest_exact);
  r.report = rec.dump() + "\n";
  r.stdout_text = "height " + format_double(h.height) + (h.certified ? " certified" : " uncertified") + "\n";
  r.lock = run.config;
  return r;
}

// ---- dioph ----

SubgroupFamily family_of(const ConfigDoc& doc, const AlgebraPtr& alg) {
  const std::string kind = get_or(doc, "family", "kind", "stabilizers");
  if (kind == "stabilizers") {
    RationalMatrix q = parse_rational_matrix(need(doc, "algebra", "form"));
    std::vector<RationalVector> constraint;
    if (auto c = get_or(doc, "family", "constraint", ""); !c.empty()) constraint = parse_rational_vectors(c);
    return enumerate_stabilizers(alg, q, parse_number(need(doc, "family", "norm_bound")), constraint);
  }
  if (kind == "normal") return normal_factors(alg);
  if (kind == "custom") {
    std::vector<SubgroupData> members;
    std::size_t i = 0;
    for (const auto& item : parse_array(need(doc, "family", "members")))
      members.push_back({parse_rational_vectors(item), "member" + std::to_string(i++)});
    return custom_family(alg, members);
  }
  throw DomainError("family: unknown kind " + kind);
}

Result cmd_dioph(const Run& run) {
  auto alg = algebra_of(run.config);
  auto family = family_of(run.config, alg);
  Matrix g = parse_matrix(need(run.config, "point", "g"));
  Vector z = to_double(parse_rational_vector(need(run.config, "point", "z")));
  const double eta = parse_number(get_or(run.config, "point", "eta", "0.1"));
  const double T = parse_number(need(run.config, "point", "T"));
  auto rep = is_diophantine(g, z, eta, T, family, ledger_of(run));
  Result r;
  for (const auto& w : rep.witnesses)
    r.report += json{{"kind", "witness"},        {"member", w.member},          {"label", w.label},
                     {"eta_norm", w.eta_norm},   {"transversal", w.transversal}, {"threshold", w.threshold}}
                    .dump() +
                "\n";
  r.report += json{{"kind", "dioph"}, {"verdict", rep.verdict}, {"scanned", rep.scanned}, {"scope", rep.scope}}.dump() +
              "\n";
  r.stdout_text = std::string("diophantine ") + (rep.verdict ? "true" : "false") + " scanned=" +
                  std::to_string(rep.scanned) + "\n";
  r.lock = run.config;
  put_ledger(r.lock, ledger_of(run));
  return r;
}

// ---- flow ----

Result cmd_flow(const Run& run) {
  const Quotient x = Quotient::sl2();
  const auto& c = run.config;
  Matrix x0 = c.count("flow") && c.at("flow").count("g") ? parse_matrix(c.at("flow").at("g"))
                                                          : closed_horocycle_point(parse_number(need(c, "flow", "height")));
  NilpotentDirection u(x.algebra(), parse_rational_vector(get_or(c, "flow", "z", "[1, 0, 0]")));
  TestFunction f = make_test_function(parse_matrix(need(c, "flow", "center")),
                                      parse_number(get_or(c, "flow", "scale", "0.45")),
                                      static_cast<int>(parse_integer(get_or(c, "flow", "exponent", "4"))));
  auto reference = reference_sl2(x, f);
  auto rep = discrepancy_report(x0, u, f, parse_integer(get_or(c, "flow", "k1", "1")),
                                parse_integer(get_or(c, "flow", "k2", "6")), parse_number(get_or(c, "flow", "K", "2")),
                                parse_number(get_or(c, "flow", "step", "0.01")), reference);
  Result r;
  for (const auto& w : rep.windows)
    r.report += json{{"kind", "window"},   {"n", w.n},
                     {"lo", w.lo},         {"hi", w.hi},
                     {"average", w.average}, {"discrepancy", w.discrepancy},
                     {"error", w.error}}
                    .dump() +
                "\n";
  r.report += json{{"kind", "reference"}, {"value", reference.value}, {"error", reference.error}, {"method", reference.method}}
                  .dump() +
              "\n";
  r.stdout_text = rep.records();
  r.lock = run.config;
  return r;
}

// ---- scenarios ----

Scenario scenario_of(const Run& run) {
  const auto& c = run.config;
  if (c.count("orbit")) {
    Scenario sc = Scenario::from_config(c);
    if (run.seed) sc.seed = *run.seed;
    if (run.ledger) sc.ledger = ledger_of(run);
    return sc;
  }
  const std::string kind = need(c, "build", "kind");
  Budgets b = parse_budgets(c);
  const std::uint64_t seed = seed_of(run, "build");
  std::optional<Scenario> sc;
  if (kind == "so") {
    sc = scenario_so(parse_rational_matrix(need(c, "build", "form")), parse_rational_vectors(need(c, "build", "L")),
                     parse_integer(get_or(c, "build", "level", "1")), b, seed);
  } else if (kind == "sl2") {
    sc = scenario_sl2(parse_rational_vectors(need(c, "build", "h_algebra")),
                      parse_matrix(get_or(c, "build", "g", "[[1, 0], [0, 1]]")), b, seed);
  } else {
    throw DomainError("build: unknown kind " + kind);
  }
  if (auto o = get_or(c, "build", "offset", ""); !o.empty()) sc = with_transversal_offset(*sc, parse_number(o));
  if (auto p = get_or(c, "build", "planted", ""); !p.empty()) sc = planted_borel(*sc, parse_number(p));
  sc->ledger = ledger_of(run);
  return *sc;
}

// Lock = serialized scenario plus the command-specific sections.
ConfigDoc scenario_lock(const Scenario& sc, const ConfigDoc& config, std::initializer_list<const char*> keep) {
  ConfigDoc lock = sc.to_config();
  for (const char* k : keep)
    if (config.count(k)) lock[k] = config.at(k);
  return lock;
}

Result cmd_pair_search(const Run& run) {
  Scenario sc = scenario_of(run);
  auto rep = accumulate_invariance(sc);
  Result r;
  r.report = rep.records();
  r.stdout_text = rep.summary();
  r.lock = scenario_lock(sc, run.config, {});
  return r;
}

Result cmd_experiment_equi(const Run& run) {
  Scenario templ = scenario_of(run);
  const auto& c = run.config;
  std::vector<std::vector<RationalVector>> family;
  for (const auto& item : parse_array(need(c, "family", "L"))) family.push_back(parse_rational_vectors(item));
  auto opt = default_equidistribution_options(std::stoull(get_or(c, "equi", "battery_seed", "1")),
                                              static_cast<std::size_t>(parse_integer(get_or(c, "equi", "per_factor", "8"))));
  opt.samples = static_cast<std::size_t>(parse_integer(get_or(c, "equi", "samples", "200000")));
  opt.walk_reference_steps = static_cast<std::size_t>(parse_integer(get_or(c, "equi", "walk_reference_steps", "200000")));
  auto rep = equidistribution_experiment(family, templ, opt);
  Result r;
  r.report = rep.records();
  r.csv = rep.csv();
  r.stdout_text = rep.csv() + "spearman " + format_double(rep.spearman) +
                  (rep.slope ? " slope " + format_double(*rep.slope) : std::string()) + "\n";
  r.lock = scenario_lock(templ, c, {"family", "equi"});
  return r;
}

Result cmd_experiment_closing(const Run& run) {
  const auto& c = run.config;
  const std::uint64_t seed = seed_of(run, "closing");
  std::vector<double> T_grid;
  for (const auto& t : parse_array(get_or(c, "closing", "T_grid", "[50, 200, 1000]"))) T_grid.push_back(parse_number(t));
  const double eta = parse_number(get_or(c, "closing", "eta", "0.1"));
  const double planted = parse_number(get_or(c, "closing", "planted_height", "5"));
  const long generic = parse_integer(get_or(c, "closing", "generic_count", "5"));

  Budgets b;
  b.step = parse_number(get_or(c, "closing", "step", "0.05"));
  const RationalVector E{1, 0, 0}, H{0, 1, 0};
  Scenario sc = scenario_sl2({E, H}, Matrix::Identity(2, 2), b, seed);
  sc.orbit.z = E;
  sc.ledger = ledger_of(run);
  auto family = custom_family(sc.orbit.quotient.algebra(), {{{E}, "unipotent N"}, {{E, H}, "Borel B"}});
  std::vector<std::pair<std::string, std::vector<RationalVector>>> s_choices{{"borel", {E, H}}};
  if (get_or(c, "closing", "include_ideal", "false") == "true")
    s_choices.push_back({"whole algebra", {E, H, RationalVector{0, 0, 1}}});
  std::vector<std::pair<std::string, Matrix>> points{{"planted horocycle y=" + format_double(planted),
                                                      closed_horocycle_point(planted)}};
  std::mt19937_64 rng(seed);
  for (long i = 0; i < generic; ++i) points.push_back({"generic " + std::to_string(i), sample_haar_sl2(rng)});
  auto rep = closing_lemma_experiment(sc, s_choices, T_grid, points, family, eta);
  Result r;
  r.report = rep.records();
  for (const auto& row : rep.rows)
    r.stdout_text += row.point + " | " + row.s_label + " | T=" + format_double(row.T) + " | " +
                     (row.error.empty() ? (row.fired ? "fired" : "quiet") : "error: " + row.error) + " | theta " +
                     format_double(row.theta) + (row.intermediate.empty() ? "" : " (" + row.intermediate + ")") + "\n";
  r.lock = c;
  r.lock["closing"]["seed"] = std::to_string(seed);
  put_ledger(r.lock, sc.ledger);
  return r;
}

Result dispatch(const Run& run);

Result cmd_replay(const Run& run) {
  Run inner;
  inner.command = need(run.config, "run", "command");
  if (inner.command == "replay") throw DomainError("replay: a lock cannot replay itself");
  inner.config = run.config;
  inner.config.erase("run");
  return dispatch(inner);
}

Result dispatch(const Run& run) {
  Result r;
  if (run.command == "algebra-check") r = cmd_algebra_check(run);
  else if (run.command == "disc") r = cmd_disc(run);
  else if (run.command == "height") r = cmd_height(run);
  else if (run.command == "dioph") r = cmd_dioph(run);
  else if (run.command == "flow") r = cmd_flow(run);
  else if (run.command == "pair-search") r = cmd_pair_search(run);
  else if (run.command == "experiment-equi") r = cmd_experiment_equi(run);
  else if (run.command == "experiment-closing") r = cmd_experiment_closing(run);
  else if (run.command == "replay") return cmd_replay(run);
  else throw std::logic_error("unknown command");
  r.lock["run"]["command"] = run.command;
  return r;
}

void write_outputs(const Result& r, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir + "/report.jsonl", r.report);
  if (r.csv) write_file(dir + "/summary.csv", *r.csv);
  write_file(dir + "/scenario.lock", write_config(r.lock));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"orbitlab: experiments on unipotent orbits in arithmetic quotients"};
  app.require_subcommand(1);
  std::string config_path, out_dir = ".", ledger_path;
  std::uint64_t seed = 0;
  int budget = 0;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"algebra-check", "exact identities on seeded random elements"},
      {"disc", "exact orbit map and discriminant of a subgroup at a rational point"},
      {"height", "height in the cusp of a point"},
      {"dioph", "Diophantine verdict of a point against a subgroup family"},
      {"flow", "windowed discrepancy report on SL2(Z)\\SL2(R)"},
      {"pair-search", "invariance-accumulation chain for a scenario"},
      {"experiment-equi", "equidistribution rate experiment over a family of subspaces"},
      {"experiment-closing", "closing-lemma dichotomy experiment"},
      {"replay", "re-run a stored scenario.lock"}};
  std::vector<CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "seed override");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--budget-seconds", budget, "wall-clock budget; exit 2 when exceeded")->check(CLI::NonNegativeNumber);
    sub->add_option("--ledger", ledger_path, "constant ledger overrides")->check(CLI::ExistingFile);
    subs.push_back(sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kUsage;
  }

  Run run;
  for (auto* sub : subs)
    if (sub->parsed()) run.command = sub->get_name();
  for (auto* sub : subs)
    if (sub->parsed() && sub->count("--seed")) run.seed = seed;

  // The worker reports through these; the main thread enforces the budget.
  std::mutex m;
  std::condition_variable cv;
  bool done = false;
  int code = 0;
  auto worker = std::thread([&] {
    int c = 0;
    try {
      run.config = parse_config(read_file(config_path));
      if (!ledger_path.empty()) run.ledger = ConstantLedger::parse(read_file(ledger_path));
      Result r = dispatch(run);
      write_outputs(r, out_dir);
      std::cout << r.stdout_text << std::flush;
    } catch (const BudgetExhausted& e) {
      std::cerr << "budget exhausted: " << e.what() << "\n";
      c = 2;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      c = 1;
    }
    std::lock_guard<std::mutex> lock(m);
    done = true;
    code = c;
    cv.notify_all();
  });
  std::unique_lock<std::mutex> lock(m);
  if (budget > 0) {
    if (!cv.wait_for(lock, std::chrono::seconds(budget), [&] { return done; })) {
      std::cerr << "budget exhausted: " << budget << " s\n";
      std::cerr.flush();
      std::_Exit(2);
    }
  } else {
    cv.wait(lock, [&] { return done; });
  }
  lock.unlock();
  worker.join();
  return code;
}
