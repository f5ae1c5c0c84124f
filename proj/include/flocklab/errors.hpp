#pragma once

#include <stdexcept>
#include <string>

namespace flocklab {

/// Configuration problems; messages carry line numbers / key names.
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical solver faults: blow-up, lost positivity, propagated failures.
class solver_fault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A time step violated an advective stability constraint.
class cfl_violation : public solver_fault {
 public:
  using solver_fault::solver_fault;
};

/// Lagrangian markers crossed: the strong-solution regime ended.
class characteristic_crossing : public solver_fault {
 public:
  characteristic_crossing(const std::string& what, double t)
      : solver_fault(what), time_(t) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

}  // namespace flocklab
