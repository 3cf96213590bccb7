#include "dtram/nn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dtram {

namespace {

constexpr double kLogEps = 1e-12;

std::string shape_of(ConstMatRef m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

}  // namespace

VectorXd affine_forward(ConstVecRef x, ConstMatRef W, ConstVecRef b) {
  if (W.cols() != x.size() || W.rows() != b.size()) {
    throw std::invalid_argument("affine_forward: W is " + shape_of(W) +
                                " but x has " + std::to_string(x.size()) +
                                " rows and b has " + std::to_string(b.size()));
  }
  VectorXd y = b;
  y.noalias() += W * x;
  return y;
}

VectorXd affine_backward(ConstVecRef x, ConstMatRef W, ConstVecRef dy,
                         MatrixXd& dW, MatrixXd& db) {
  if (W.cols() != x.size() || W.rows() != dy.size()) {
    throw std::invalid_argument("affine_backward: W is " + shape_of(W) +
                                " but x has " + std::to_string(x.size()) +
                                " rows and dy has " + std::to_string(dy.size()));
  }
  if (dW.rows() != W.rows() || dW.cols() != W.cols() || db.rows() != dy.size()) {
    throw std::invalid_argument("affine_backward: gradient buffers are " +
                                shape_of(dW) + " / " + std::to_string(db.rows()) +
                                " but W is " + shape_of(W));
  }
  dW.noalias() += dy * x.transpose();
  db.col(0) += dy;
  return W.transpose() * dy;
}

VectorXd relu_forward(ConstVecRef x) { return x.cwiseMax(0.0); }

VectorXd relu_backward(ConstVecRef x, ConstVecRef dy) {
  return (x.array() > 0.0).select(dy, 0.0);
}

VectorXd softmax(ConstVecRef logits) {
  const double m = logits.maxCoeff();
  VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

double cross_entropy_loss(ConstVecRef probs, int label) {
  if (label < 0 || label >= probs.size()) {
    throw std::out_of_range("cross_entropy_loss: label " + std::to_string(label) +
                            " outside [0, " + std::to_string(probs.size()) + ")");
  }
  return -std::log(probs(label) + kLogEps);
}

VectorXd cross_entropy_backward_logits(ConstVecRef probs, int label) {
  if (label < 0 || label >= probs.size()) {
    throw std::out_of_range("cross_entropy_loss: label " + std::to_string(label) +
                            " outside [0, " + std::to_string(probs.size()) + ")");
  }
  VectorXd d = probs;
  d(label) -= 1.0;
  return d;
}

Eigen::Vector2d gaussian_logprob_grad(const Eigen::Vector2d& sample,
                                      const Eigen::Vector2d& mean, double sigma) {
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("gaussian_logprob_grad: sigma must be positive, got " +
                                std::to_string(sigma));
  }
  return (sample - mean) / (sigma * sigma);
}

void sgd_momentum_step(const std::vector<Parameter*>& params, double lr,
                       double momentum) {
  for (Parameter* p : params) {
    p->velocity = momentum * p->velocity + p->grad;
    p->value -= lr * p->velocity;
  }
}

double finite_difference_check(const std::function<double()>& loss_fn,
                               const std::vector<Parameter*>& params, double eps) {
  double worst = 0.0;
  for (Parameter* p : params) {
    for (long j = 0; j < p->value.cols(); ++j) {
      for (long i = 0; i < p->value.rows(); ++i) {
        const double saved = p->value(i, j);
        p->value(i, j) = saved + eps;
        const double fp = loss_fn();
        p->value(i, j) = saved - eps;
        const double fm = loss_fn();
        p->value(i, j) = saved;
        const double fd = (fp - fm) / (2.0 * eps);
        const double g = p->grad(i, j);
        const double denom = std::max({std::abs(fd), std::abs(g), 1e-3});
        worst = std::max(worst, std::abs(fd - g) / denom);
      }
    }
  }
  return worst;
}

}  // namespace dtram
