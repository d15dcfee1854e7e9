#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lbsim::rl {

/// Contiguous groups (one per tunnel) of a flat logit vector.
using GroupSizes = std::vector<std::size_t>;

/// Per-group Euclidean projection of logits onto the simplex. Unlike softmax
/// it produces exact zeros, so a policy can switch a path off entirely.
std::vector<double> sparsemax(const GroupSizes& groups, std::span<const double> z);

/// Vector-Jacobian product: dL/dz given x = sparsemax(z) and dL/dx.
std::vector<double> sparsemax_vjp(const GroupSizes& groups, std::span<const double> x,
                                  std::span<const double> grad_x);

}  // namespace lbsim::rl
