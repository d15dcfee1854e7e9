#include "lp.hpp"

#include <cmath>
#include <cstddef>
#include <limits>

namespace lbsim::detail {

namespace {

constexpr double kEps = 1e-11;

class Tableau {
 public:
  Tableau(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), t_((rows + 1) * (cols + 1), 0.0), basis_(rows) {}

  double& at(std::size_t i, std::size_t j) { return t_[i * (cols_ + 1) + j]; }
  double& rhs(std::size_t i) { return at(i, cols_); }
  double& cost(std::size_t j) { return at(rows_, j); }
  double& value() { return at(rows_, cols_); }
  std::size_t& basis(std::size_t i) { return basis_[i]; }

  void pivot(std::size_t r, std::size_t c) {
    const double p = at(r, c);
    for (std::size_t j = 0; j <= cols_; ++j) at(r, j) /= p;
    for (std::size_t i = 0; i <= rows_; ++i) {
      if (i == r) continue;
      const double f = at(i, c);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j <= cols_; ++j) at(i, j) -= f * at(r, j);
    }
    basis_[r] = c;
  }

  // Bland's rule over columns [0, usable). Returns false when unbounded.
  bool run(std::size_t usable) {
    for (;;) {
      std::size_t enter = usable;
      for (std::size_t j = 0; j < usable; ++j)
        if (cost(j) < -kEps) {
          enter = j;
          break;
        }
      if (enter == usable) return true;
      std::size_t leave = rows_;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < rows_; ++i) {
        const double v = at(i, enter);
        if (v <= kEps) continue;
        const double ratio = rhs(i) / v;
        if (leave == rows_ || ratio < best - kEps ||
            (std::abs(ratio - best) <= kEps && basis_[i] < basis_[leave])) {
          best = ratio;
          leave = i;
        }
      }
      if (leave == rows_) return false;
      pivot(leave, enter);
    }
  }

 private:
  std::size_t rows_, cols_;
  std::vector<double> t_;
  std::vector<std::size_t> basis_;
};

}  // namespace

LpResult solve_lp(const std::vector<double>& a, const std::vector<double>& b,
                  const std::vector<double>& c) {
  const std::size_t m = b.size();
  const std::size_t n = c.size();
  Tableau tab(m, n + m);  // original columns, then one artificial per row

  for (std::size_t i = 0; i < m; ++i) {
    const double sign = b[i] < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < n; ++j) tab.at(i, j) = sign * a[i * n + j];
    tab.at(i, n + i) = 1.0;
    tab.rhs(i) = sign * b[i];
    tab.basis(i) = n + i;
  }
  // Phase 1: minimize the artificial sum.
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += tab.at(i, j);
    tab.cost(j) = -s;
  }
  double sb = 0.0;
  for (std::size_t i = 0; i < m; ++i) sb += tab.rhs(i);
  tab.value() = -sb;
  tab.run(n + m);

  LpResult res;
  if (-tab.value() > 1e-9) return res;  // infeasible
  res.feasible = true;

  for (std::size_t i = 0; i < m; ++i) {
    if (tab.basis(i) < n) continue;
    for (std::size_t j = 0; j < n; ++j)
      if (std::abs(tab.at(i, j)) > 1e-9) {
        tab.pivot(i, j);
        break;
      }
  }

  // Phase 2 reduced costs over the original columns.
  for (std::size_t j = 0; j <= n + m; ++j) tab.cost(j) = 0.0;
  for (std::size_t j = 0; j < n; ++j) tab.cost(j) = c[j];
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t bi = tab.basis(i);
    const double cb = bi < n ? c[bi] : 0.0;
    if (cb == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) tab.cost(j) -= cb * tab.at(i, j);
    tab.value() -= cb * tab.rhs(i);
  }
  res.bounded = tab.run(n);
  res.y.assign(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    if (tab.basis(i) < n) res.y[tab.basis(i)] = std::max(0.0, tab.rhs(i));
  res.value = 0.0;
  for (std::size_t j = 0; j < n; ++j) res.value += c[j] * res.y[j];
  return res;
}

}  // namespace lbsim::detail
