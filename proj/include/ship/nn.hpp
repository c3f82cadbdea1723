#pragma once

// Minimal training plumbing: named parameter tensors, AdamW, and the
// forward/backward helpers shared by the generator and the heads. Parameters
// are kept sorted by name, which both fixes the checkpoint blob order and
// keeps optimizer state alignment stable.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace ship {

struct NamedTensor {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;
};

class ParameterSet {
 public:
  Eigen::MatrixXd& add(const std::string& name, Eigen::Index rows,
                       Eigen::Index cols) {
    auto it = lower_bound(name);
    if (it != items_.end() && it->name == name)
      throw std::logic_error("duplicate parameter: " + name);
    it = items_.insert(it, NamedTensor{name, Eigen::MatrixXd::Zero(rows, cols),
                                       Eigen::MatrixXd::Zero(rows, cols)});
    return it->value;
  }

  bool has(const std::string& name) const {
    auto it = lower_bound(name);
    return it != items_.end() && it->name == name;
  }

  Eigen::MatrixXd& value(const std::string& name) { return find(name).value; }
  const Eigen::MatrixXd& value(const std::string& name) const {
    return find(name).value;
  }
  Eigen::MatrixXd& grad(const std::string& name) { return find(name).grad; }

  void zero_grad() {
    for (auto& t : items_) t.grad.setZero();
  }

  std::size_t size() const { return items_.size(); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

 private:
  std::vector<NamedTensor>::iterator lower_bound(const std::string& name) {
    return std::lower_bound(
        items_.begin(), items_.end(), name,
        [](const NamedTensor& t, const std::string& n) { return t.name < n; });
  }
  std::vector<NamedTensor>::const_iterator lower_bound(
      const std::string& name) const {
    return std::lower_bound(
        items_.begin(), items_.end(), name,
        [](const NamedTensor& t, const std::string& n) { return t.name < n; });
  }
  NamedTensor& find(const std::string& name) {
    auto it = lower_bound(name);
    if (it == items_.end() || it->name != name)
      throw std::logic_error("unknown parameter: " + name);
    return *it;
  }
  const NamedTensor& find(const std::string& name) const {
    auto it = lower_bound(name);
    if (it == items_.end() || it->name != name)
      throw std::logic_error("unknown parameter: " + name);
    return *it;
  }

  std::vector<NamedTensor> items_;  // sorted by name
};

// Decoupled weight decay; moments are lazily sized on the first step and
// aligned with the set's sorted order.
class AdamW {
 public:
  AdamW(double learning_rate, double weight_decay)
      : lr_(learning_rate), weight_decay_(weight_decay) {}

  void set_learning_rate(double lr) { lr_ = lr; }

  void step(ParameterSet& params) {
    if (moments_m_.empty()) {
      for (const auto& t : params) {
        moments_m_.push_back(Eigen::MatrixXd::Zero(t.value.rows(), t.value.cols()));
        moments_v_.push_back(Eigen::MatrixXd::Zero(t.value.rows(), t.value.cols()));
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    std::size_t i = 0;
    for (auto& t : params) {
      auto& m = moments_m_[i];
      auto& v = moments_v_[i];
      m = beta1_ * m + (1.0 - beta1_) * t.grad;
      v = beta2_ * v.array().matrix() +
          (1.0 - beta2_) * t.grad.array().square().matrix();
      const Eigen::ArrayXXd m_hat = m.array() / bc1;
      const Eigen::ArrayXXd v_hat = v.array() / bc2;
      t.value.array() -=
          lr_ * (m_hat / (v_hat.sqrt() + eps_) + weight_decay_ * t.value.array());
      ++i;
    }
  }

 private:
  double lr_;
  double weight_decay_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
  std::vector<Eigen::MatrixXd> moments_m_;
  std::vector<Eigen::MatrixXd> moments_v_;
};

inline Eigen::VectorXd affine(const Eigen::MatrixXd& w,
                              const Eigen::MatrixXd& b,
                              const Eigen::VectorXd& x) {
  return w * x + b.col(0);
}

// Accumulates dW, db and returns dL/dx.
inline Eigen::VectorXd affine_backward(const Eigen::MatrixXd& w,
                                       const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& dy,
                                       Eigen::MatrixXd& dw,
                                       Eigen::MatrixXd& db) {
  dw.noalias() += dy * x.transpose();
  db.col(0) += dy;
  return w.transpose() * dy;
}

inline Eigen::VectorXd relu(const Eigen::VectorXd& x) {
  return x.cwiseMax(0.0);
}

inline Eigen::VectorXd relu_backward(const Eigen::VectorXd& pre,
                                     const Eigen::VectorXd& dy) {
  return (pre.array() > 0.0).select(dy, Eigen::VectorXd::Zero(dy.size()));
}

// Backward of y = v / |v| given upstream dL/dy.
inline Eigen::VectorXd normalize_backward(const Eigen::VectorXd& v,
                                          const Eigen::VectorXd& dy) {
  const double norm = v.norm();
  const Eigen::VectorXd y = v / norm;
  return (dy - y * y.dot(dy)) / norm;
}

inline Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const Eigen::ArrayXd shifted = logits.array() - logits.maxCoeff();
  const Eigen::ArrayXd e = shifted.exp();
  return (e / e.sum()).matrix();
}

// Training-rate schedule: flat for the first 60% of epochs, then a cosine
// tail to zero. The tail settles the Adam step-size jitter once the loss has
// plateaued without slowing the productive phase.
inline double cosine_lr(double base_lr, int epoch, int total_epochs) {
  if (total_epochs <= 1) return base_lr;
  const double progress =
      static_cast<double>(epoch) / static_cast<double>(total_epochs);
  constexpr double kFlatFraction = 0.6;
  if (progress < kFlatFraction) return base_lr;
  const double tail = (progress - kFlatFraction) / (1.0 - kFlatFraction);
  return base_lr * 0.5 * (1.0 + std::cos(M_PI * tail));
}

}  // namespace ship
