// Named trainable parameter and the Adam optimizer with global-norm clipping.
#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oietd/errors.hpp"

namespace oietd {

struct Param {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;
  // When set, this parameter trains with its own learning rate instead of
  // the global one (used for the relation embedding matrix).
  std::optional<double> lr_override;

  Param() = default;
  Param(std::string n, Eigen::MatrixXd v)
      : name(std::move(n)), value(std::move(v)), grad(Eigen::MatrixXd::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(); }
};

// Epoch-indexed multiplicative schedule: lr(k) = base * factor^k.
inline double scheduled_lr(double base_lr, double factor, int epoch) {
  return base_lr * std::pow(factor, epoch);
}

// Scales all gradients so the global L2 norm is at most max_norm.
// Returns the post-clip norm.
inline double clip_global_grad_norm(const std::vector<Param*>& params, double max_norm) {
  double sq = 0.0;
  for (const Param* p : params) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (Param* p : params) p->grad *= scale;
    return max_norm;
  }
  return norm;
}

class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::vector<Param*> params, double grad_clip = 1.0,
                         double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), grad_clip_(grad_clip), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Param* p : params_) {
      m_.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
    }
  }

  // One update with the given (already scheduled) learning rate. Clips the
  // global gradient norm first and returns the post-clip norm.
  double step(double lr) {
    const double norm = clip_global_grad_norm(params_, grad_clip_);
    if (norm > grad_clip_ + 1e-6)
      throw std::logic_error("gradient clipping failed to bound the norm");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Param& p = *params_[i];
      const double plr = p.lr_override.value_or(lr);
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
      const Eigen::MatrixXd m_hat = m_[i] / bc1;
      const Eigen::MatrixXd v_hat = v_[i] / bc2;
      p.value.array() -= plr * m_hat.array() / (v_hat.array().sqrt() + eps_);
    }
    return norm;
  }

  void zero_grad() {
    for (Param* p : params_) p->zero_grad();
  }

  const std::vector<Param*>& params() const { return params_; }

 private:
  std::vector<Param*> params_;
  double grad_clip_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Eigen::MatrixXd> m_, v_;
};

}  // namespace oietd
