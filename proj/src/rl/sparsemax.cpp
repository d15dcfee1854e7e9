#include "lbsim/rl/sparsemax.hpp"

#include <algorithm>
#include <numeric>

#include "lbsim/error.hpp"
#include "lbsim/optimizer.hpp"

namespace lbsim::rl {

namespace {

void check_total(const GroupSizes& groups, std::size_t n) {
  if (std::accumulate(groups.begin(), groups.end(), std::size_t{0}) != n)
    throw Error(ErrorKind::kShape, "group sizes do not cover the logit vector");
}

}  // namespace

std::vector<double> sparsemax(const GroupSizes& groups, std::span<const double> z) {
  check_total(groups, z.size());
  std::vector<double> x(z.begin(), z.end());
  std::size_t off = 0;
  for (std::size_t g : groups) {
    project_simplex(std::span<double>(x).subspan(off, g));
    off += g;
  }
  return x;
}

std::vector<double> sparsemax_vjp(const GroupSizes& groups, std::span<const double> x,
                                  std::span<const double> grad_x) {
  check_total(groups, x.size());
  std::vector<double> out(x.size(), 0.0);
  std::size_t off = 0;
  for (std::size_t g : groups) {
    double sum = 0.0;
    std::size_t support = 0;
    for (std::size_t i = off; i < off + g; ++i)
      if (x[i] > 0.0) {
        sum += grad_x[i];
        ++support;
      }
    const double mean = support ? sum / static_cast<double>(support) : 0.0;
    for (std::size_t i = off; i < off + g; ++i)
      if (x[i] > 0.0) out[i] = grad_x[i] - mean;
    off += g;
  }
  return out;
}

}  // namespace lbsim::rl
