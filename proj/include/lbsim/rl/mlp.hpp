#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace lbsim::rl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Fully connected tanh network with a linear output layer. All parameters
/// live in one flat vector (per layer: W column-major, then b), which is what
/// the optimizer, Polyak averaging and gradient checks operate on.
class Mlp {
 public:
  Mlp() = default;
  /// `dims` = {input, hidden..., output}.
  explicit Mlp(std::vector<std::size_t> dims);

  /// Scaled orthogonal-style init: each layer gets a random orthonormal basis
  /// scaled by `gain`, the output layer by `output_gain`; biases zero.
  void init(std::mt19937_64& rng, double gain, double output_gain);

  struct Cache {
    std::vector<Matrix> inputs;  // input to each layer (post-activation of the previous)
    Matrix output;
  };

  /// Columns are samples. Throws kShape on input-dimension mismatch.
  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;

  /// Reverse pass for dLoss/dOutput `grad_out`; accumulates into `grad`
  /// (same layout as params()) and returns dLoss/dInput.
  Matrix backward(const Cache& cache, const Matrix& grad_out, Vector& grad) const;

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t output_dim() const { return dims_.back(); }
  std::size_t num_layers() const { return dims_.size() - 1; }

  Vector& params() { return params_; }
  const Vector& params() const { return params_; }

  Eigen::Map<const Matrix> weight(std::size_t layer) const;
  Eigen::Map<Matrix> weight(std::size_t layer);
  Eigen::Map<const Vector> bias(std::size_t layer) const;
  Eigen::Map<Vector> bias(std::size_t layer);

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> w_off_, b_off_;
  Vector params_;
};

struct Adam {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Vector m, v;
  long long t = 0;

  void step(Vector& params, const Vector& grad);
};

/// Scales `grad` so its L2 norm is at most `max_norm`; returns the pre-clip norm.
double clip_grad_norm(Vector& grad, double max_norm);

/// target <- tau * main + (1 - tau) * target
void polyak_update(Vector& target, const Vector& main, double tau);

}  // namespace lbsim::rl
