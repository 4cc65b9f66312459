#pragma once

#include <map>
#include <string>
#include <vector>

namespace orbitlab {

// Named registry for every constant that is only known to exist, plus the
// tunable thresholds of the good-set construction. All values are positive.
class ConstantLedger {
 public:
  ConstantLedger();

  double get(const std::string& name) const;
  bool has(const std::string& name) const { return values_.count(name) > 0; }
  // Setting p_G re-derives K = 20(p_G + 1) unless K was overridden.
  void set(const std::string& name, double value);
  const std::map<std::string, double>& values() const { return values_; }

  double derived_K() const { return 20.0 * (get("p_G") + 1.0); }
  bool K_overridden() const { return k_overridden_; }
  std::vector<std::string> flags() const;

  // `name = value` lines, sorted by name.
  std::string str() const;
  // Accepts `name = value` lines; `#` comments and `[section]` headers are skipped.
  static ConstantLedger parse(const std::string& text);

 private:
  std::map<std::string, double> values_;
  bool k_overridden_ = false;
};

}  // namespace orbitlab
