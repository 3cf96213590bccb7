#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace dtram {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using ConstVecRef = const Eigen::Ref<const VectorXd>&;
using ConstMatRef = const Eigen::Ref<const MatrixXd>&;

// A trainable tensor together with its gradient accumulator and momentum
// buffer. Bias vectors are stored as n-by-1 matrices so every parameter
// shares one type; `rank` records whether it serializes as a matrix or a
// vector. Gradients accumulate additively and are zeroed by the caller
// between optimizer steps.
struct Parameter {
  std::string name;
  int rank = 2;  // 2: weight matrix, 1: bias vector
  MatrixXd value, grad, velocity;

  Parameter(std::string name_, int rows, int cols)
      : name(std::move(name_)),
        rank(2),
        value(MatrixXd::Zero(rows, cols)),
        grad(MatrixXd::Zero(rows, cols)),
        velocity(MatrixXd::Zero(rows, cols)) {}

  Parameter(std::string name_, int rows)
      : name(std::move(name_)),
        rank(1),
        value(MatrixXd::Zero(rows, 1)),
        grad(MatrixXd::Zero(rows, 1)),
        velocity(MatrixXd::Zero(rows, 1)) {}

  void zero_grad() { grad.setZero(); }
};

// y = W x + b. Throws std::invalid_argument naming both shapes on mismatch.
VectorXd affine_forward(ConstVecRef x, ConstMatRef W, ConstVecRef b);

// Accumulates dW += dy x^T and db += dy; returns dx = W^T dy.
VectorXd affine_backward(ConstVecRef x, ConstMatRef W, ConstVecRef dy,
                         MatrixXd& dW, MatrixXd& db);

VectorXd relu_forward(ConstVecRef x);

// dx = dy where x > 0, else 0 (subgradient 0 at the kink).
VectorXd relu_backward(ConstVecRef x, ConstVecRef dy);

// Max-subtracted softmax; overflow-safe for large logits.
VectorXd softmax(ConstVecRef logits);

// -log(probs[label] + eps) with eps = 1e-12.
double cross_entropy_loss(ConstVecRef probs, int label);

// Gradient of cross_entropy_loss w.r.t. the logits that produced `probs`,
// i.e. probs - onehot(label).
VectorXd cross_entropy_backward_logits(ConstVecRef probs, int label);

// d log N(sample; mean, sigma^2 I) / d mean = (sample - mean) / sigma^2.
// Requires sigma > 0.
Eigen::Vector2d gaussian_logprob_grad(const Eigen::Vector2d& sample,
                                      const Eigen::Vector2d& mean,
                                      double sigma);

// velocity <- momentum * velocity + grad; value <- value - lr * velocity.
// Grads are left untouched; the caller zeroes them.
void sgd_momentum_step(const std::vector<Parameter*>& params, double lr,
                       double momentum);

// Central-difference check of the accumulated grads against loss_fn, which
// must be a deterministic function of the parameter values. Returns the
// worst per-coordinate relative error (absolute floor 1e-3 in the
// denominator so near-zero coordinates compare absolutely).
double finite_difference_check(const std::function<double()>& loss_fn,
                               const std::vector<Parameter*>& params,
                               double eps = 1e-5);

}  // namespace dtram
