#include "lbsim/rl/mlp.hpp"

#include <cmath>

#include "lbsim/error.hpp"

namespace lbsim::rl {

Mlp::Mlp(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  if (dims_.size() < 2) throw Error(ErrorKind::kShape, "network needs at least one layer");
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    if (dims_[l] == 0 || dims_[l + 1] == 0)
      throw Error(ErrorKind::kShape, "network layer with zero width");
    w_off_.push_back(off);
    off += dims_[l] * dims_[l + 1];
    b_off_.push_back(off);
    off += dims_[l + 1];
  }
  params_ = Vector::Zero(static_cast<Eigen::Index>(off));
}

void Mlp::init(std::mt19937_64& rng, double gain, double output_gain) {
  std::normal_distribution<double> n01(0.0, 1.0);
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const auto rows = static_cast<Eigen::Index>(dims_[l + 1]);
    const auto cols = static_cast<Eigen::Index>(dims_[l]);
    const bool tall = rows >= cols;
    Matrix g(tall ? rows : cols, tall ? cols : rows);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = n01(rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(g.rows(), g.cols());
    // Sign fix so the distribution is uniform over orthogonal matrices.
    Matrix r = qr.matrixQR().topRows(g.cols()).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < q.cols(); ++j)
      if (r(j, j) < 0) q.col(j) *= -1.0;
    const double scale = l + 1 == num_layers() ? output_gain : gain;
    weight(l) = (tall ? q : Matrix(q.transpose())) * scale;
    bias(l).setZero();
  }
}

Eigen::Map<const Matrix> Mlp::weight(std::size_t l) const {
  return {params_.data() + w_off_[l], static_cast<Eigen::Index>(dims_[l + 1]),
          static_cast<Eigen::Index>(dims_[l])};
}
Eigen::Map<Matrix> Mlp::weight(std::size_t l) {
  return {params_.data() + w_off_[l], static_cast<Eigen::Index>(dims_[l + 1]),
          static_cast<Eigen::Index>(dims_[l])};
}
Eigen::Map<const Vector> Mlp::bias(std::size_t l) const {
  return {params_.data() + b_off_[l], static_cast<Eigen::Index>(dims_[l + 1])};
}
Eigen::Map<Vector> Mlp::bias(std::size_t l) {
  return {params_.data() + b_off_[l], static_cast<Eigen::Index>(dims_[l + 1])};
}

Matrix Mlp::forward(const Matrix& x, Cache* cache) const {
  if (static_cast<std::size_t>(x.rows()) != input_dim())
    throw Error(ErrorKind::kShape, "network input has " + std::to_string(x.rows()) +
                                       " rows, expected " + std::to_string(input_dim()));
  if (cache) cache->inputs.clear();
  Matrix a = x;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    if (cache) cache->inputs.push_back(a);
    Matrix z = weight(l) * a;
    z.colwise() += bias(l);
    if (l + 1 < num_layers())
      a = z.array().tanh().matrix();
    else
      a = std::move(z);
  }
  if (cache) cache->output = a;
  return a;
}

Matrix Mlp::backward(const Cache& cache, const Matrix& grad_out, Vector& grad) const {
  if (grad.size() != params_.size()) grad = Vector::Zero(params_.size());
  Matrix g = grad_out;
  for (std::size_t l = num_layers(); l-- > 0;) {
    const Matrix& in = cache.inputs[l];
    Eigen::Map<Matrix> dw(grad.data() + w_off_[l], static_cast<Eigen::Index>(dims_[l + 1]),
                          static_cast<Eigen::Index>(dims_[l]));
    Eigen::Map<Vector> db(grad.data() + b_off_[l], static_cast<Eigen::Index>(dims_[l + 1]));
    dw.noalias() += g * in.transpose();
    db += g.rowwise().sum();
    Matrix prev = weight(l).transpose() * g;
    if (l > 0) prev.array() *= (1.0 - in.array().square());
    g = std::move(prev);
  }
  return g;
}

void Adam::step(Vector& params, const Vector& grad) {
  if (m.size() != params.size()) {
    m = Vector::Zero(params.size());
    v = Vector::Zero(params.size());
  }
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

double clip_grad_norm(Vector& grad, double max_norm) {
  const double n = grad.norm();
  if (max_norm > 0.0 && n > max_norm) grad *= max_norm / n;
  return n;
}

void polyak_update(Vector& target, const Vector& main, double tau) {
  target = tau * main + (1.0 - tau) * target;
}

}  // namespace lbsim::rl
