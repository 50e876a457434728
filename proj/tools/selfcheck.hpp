#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sphero::tools {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Analytic Jacobians against central differences at random small-angle points.
CheckResult check_jacobians(std::uint64_t seed);

/// KKT residuals of random box-constrained QPs.
CheckResult check_qp_kkt(std::uint64_t seed);

/// Relative energy drift of the unforced, lossless plant over 10 s.
CheckResult check_energy();

std::vector<CheckResult> run_all_checks(std::uint64_t seed);

}  // namespace sphero::tools
