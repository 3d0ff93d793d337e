#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "rehab/errors.hpp"
#include "rehab/util.hpp"

namespace rehab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Fully connected network: tanh on hidden layers, linear output. All weights
// and biases live in one flat vector (per layer: W column-major, then b).
// Inputs and outputs are column-per-sample.
class Mlp {
 public:
  struct Cache {
    std::vector<Matrix> activations;  // input, then each hidden layer after tanh
  };

  Mlp() = default;

  explicit Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw ShapeError("network needs at least an input and output layer");
    for (int s : sizes_) {
      if (s < 1) throw ShapeError("layer sizes must be positive");
    }
    offsets_.push_back(0);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      offsets_.push_back(offsets_.back() + sizes_[l + 1] * sizes_[l] + sizes_[l + 1]);
    }
    params_ = Vector::Zero(offsets_.back());
  }

  // Gaussian init scaled by 1/sqrt(fan_in); the last layer is further scaled
  // by output_gain. Biases start at zero.
  void initialize(Rng& rng, double output_gain) {
    std::normal_distribution<double> normal(0.0, 1.0);
    params_.setZero();
    for (int l = 0; l < num_layers(); ++l) {
      const double gain = (l + 1 == num_layers()) ? output_gain : 1.0;
      const double scale = gain / std::sqrt(static_cast<double>(sizes_[l]));
      auto w = weights(l);
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = scale * normal(rng);
      }
    }
  }

  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  const std::vector<int>& sizes() const { return sizes_; }
  Eigen::Index num_params() const { return params_.size(); }

  Vector& params() { return params_; }
  const Vector& params() const { return params_; }

  Eigen::Map<Matrix> weights(int l) {
    return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
  }
  Eigen::Map<const Matrix> weights(int l) const {
    return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
  }
  Eigen::Map<Vector> bias(int l) {
    return {params_.data() + offsets_[l] + sizes_[l + 1] * sizes_[l], sizes_[l + 1]};
  }
  Eigen::Map<const Vector> bias(int l) const {
    return {params_.data() + offsets_[l] + sizes_[l + 1] * sizes_[l], sizes_[l + 1]};
  }

  Matrix forward(const Matrix& input, Cache* cache = nullptr) const {
    if (input.rows() != input_size()) {
      throw ShapeError("network expects " + std::to_string(input_size()) + " inputs, got " +
                       std::to_string(input.rows()));
    }
    if (cache) {
      cache->activations.clear();
      cache->activations.push_back(input);
    }
    Matrix a = input;
    for (int l = 0; l < num_layers(); ++l) {
      Matrix z = weights(l) * a;
      z.colwise() += bias(l);
      if (l + 1 < num_layers()) {
        a = z.array().tanh().matrix();
        if (cache) cache->activations.push_back(a);
      } else {
        a = std::move(z);
      }
    }
    return a;
  }

  // Gradient of a loss w.r.t. the flat parameters given dL/d(output).
  Vector backward(const Cache& cache, const Matrix& grad_output) const {
    Vector grad = Vector::Zero(num_params());
    Matrix delta = grad_output;
    for (int l = num_layers() - 1; l >= 0; --l) {
      const Matrix& a_in = cache.activations[l];
      Eigen::Map<Matrix>(grad.data() + offsets_[l], sizes_[l + 1], sizes_[l]) =
          delta * a_in.transpose();
      Eigen::Map<Vector>(grad.data() + offsets_[l] + sizes_[l + 1] * sizes_[l], sizes_[l + 1]) =
          delta.rowwise().sum();
      if (l > 0) {
        Matrix back = weights(l).transpose() * delta;
        delta = back.array() * (1.0 - a_in.array().square());
      }
    }
    return grad;
  }

  bool finite() const { return params_.allFinite(); }

 private:
  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;
  Vector params_;
};

// Adam over a flat parameter vector.
class Adam {
 public:
  Adam() = default;
  explicit Adam(Eigen::Index n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(Vector::Zero(n)), v_(Vector::Zero(n)), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(Vector& params, const Vector& grad, double lr) {
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

 private:
  Vector m_;
  Vector v_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
};

}  // namespace rehab
