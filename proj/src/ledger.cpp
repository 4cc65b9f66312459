#include "orbitlab/ledger.hpp"

#include <cmath>
#include <sstream>

#include "orbitlab/errors.hpp"
#include "orbitlab/io.hpp"

namespace orbitlab {

ConstantLedger::ConstantLedger() {
  for (int i = 1; i <= 9; ++i) {
    values_["A" + std::to_string(i)] = 2.0;
    values_["kappa" + std::to_string(i)] = 0.1;
  }
  for (int i = 1; i <= 6; ++i) values_["C" + std::to_string(i)] = 10.0;
  values_["E"] = 1.0;
  values_["p_G"] = 2.0;
  values_["K"] = derived_K();
  values_["delta"] = 0.1;
  values_["d"] = 2.0;
  values_["eta"] = 0.1;
  // Good-set thresholds: height cutoff, required generic fraction, bad-time fraction.
  values_["eta0"] = 0.1;
  values_["good_fraction"] = 0.9;
  values_["bad_time_fraction"] = 1e-10;
}

double ConstantLedger::get(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw DomainError("ledger: unknown constant '" + name + "'");
  return it->second;
}

void ConstantLedger::set(const std::string& name, double value) {
  if (!(value > 0) || !std::isfinite(value)) throw DomainError("ledger: constant '" + name + "' must be positive");
  if (!values_.count(name)) throw DomainError("ledger: unknown constant '" + name + "'");
  values_[name] = value;
  if (name == "K") {
    k_overridden_ = value != derived_K();
  } else if (name == "p_G" && !k_overridden_) {
    values_["K"] = derived_K();
  }
}

std::vector<std::string> ConstantLedger::flags() const {
  std::vector<std::string> out;
  if (k_overridden_)
    out.push_back("K overridden: " + format_double(get("K")) + " (20(p_G+1) = " + format_double(derived_K()) + ")");
  return out;
}

std::string ConstantLedger::str() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << format_double(v) << "\n";
  return os.str();
}

ConstantLedger ConstantLedger::parse(const std::string& text) {
  ConstantLedger out;
  // p_G first so that an explicit K in the same text counts as the override.
  auto doc = parse_config(text);
  for (const auto& [section, entries] : doc)
    for (const auto& [k, v] : entries)
      if (k == "p_G") out.set(k, parse_number(v));
  for (const auto& [section, entries] : doc)
    for (const auto& [k, v] : entries)
      if (k != "p_G") out.set(k, parse_number(v));
  return out;
}

}  // namespace orbitlab
