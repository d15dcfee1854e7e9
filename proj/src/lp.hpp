#pragma once

#include <vector>

namespace lbsim::detail {

struct LpResult {
  bool feasible = false;
  bool bounded = true;
  double value = 0.0;
  std::vector<double> y;
};

/// min c.y  s.t.  A y = b, y >= 0. Dense two-phase simplex with Bland's rule;
/// meant for the tiny programs built here (tens of rows and columns).
/// `a` is row-major with rows = b.size(), cols = c.size().
LpResult solve_lp(const std::vector<double>& a, const std::vector<double>& b,
                  const std::vector<double>& c);

}  // namespace lbsim::detail
