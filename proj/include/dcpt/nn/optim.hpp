#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "dcpt/nn/graph.hpp"

namespace dcpt::nn {

// Kaiming-style normal init for conv/linear weights.
template <typename Scalar>
Tensor<Scalar> init_normal(std::vector<int> shape, long fan_in,
                           std::mt19937_64& rng) {
  Tensor<Scalar> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / double(fan_in)));
  for (long i = 0; i < t.numel(); ++i) t.data[i] = Scalar(dist(rng));
  return t;
}

template <typename Scalar>
Tensor<Scalar> init_const(std::vector<int> shape, Scalar v) {
  Tensor<Scalar> t(std::move(shape));
  t.data.setConstant(v);
  return t;
}

// AdamW with decoupled weight decay (decay defaults to zero).
template <typename Scalar>
class AdamW {
 public:
  struct State {
    ArrayX<Scalar> m, v;
  };

  AdamW() = default;
  explicit AdamW(std::vector<Var<Scalar>> params, Scalar lr,
                 Scalar weight_decay = 0, Scalar beta1 = Scalar(0.9),
                 Scalar beta2 = Scalar(0.999), Scalar eps = Scalar(1e-8))
      : params_(std::move(params)),
        lr_(lr),
        wd_(weight_decay),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps) {
    states_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      states_[i].m = ArrayX<Scalar>::Zero(params_[i]->val.numel());
      states_[i].v = ArrayX<Scalar>::Zero(params_[i]->val.numel());
    }
  }

  void set_lr(Scalar lr) { lr_ = lr; }
  Scalar lr() const { return lr_; }
  long step_count() const { return t_; }

  // Applies one update from accumulated grads, then clears them.
  void step() {
    ++t_;
    const Scalar bc1 = Scalar(1) - Scalar(std::pow(double(beta1_), double(t_)));
    const Scalar bc2 = Scalar(1) - Scalar(std::pow(double(beta2_), double(t_)));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (p->grad.numel() != p->val.numel()) continue;  // untouched this step
      auto& st = states_[i];
      st.m = beta1_ * st.m + (Scalar(1) - beta1_) * p->grad.data;
      st.v = beta2_ * st.v + (Scalar(1) - beta2_) * p->grad.data.square();
      if (wd_ != Scalar(0)) p->val.data -= lr_ * wd_ * p->val.data;
      p->val.data -= lr_ * (st.m / bc1) / ((st.v / bc2).sqrt() + eps_);
    }
    zero_grad();
  }

  void zero_grad() {
    for (auto& p : params_) p->grad = Tensor<Scalar>{};
  }

  const std::vector<Var<Scalar>>& params() const { return params_; }
  std::vector<State>& states() { return states_; }
  void set_step_count(long t) { t_ = t; }

 private:
  std::vector<Var<Scalar>> params_;
  std::vector<State> states_;
  Scalar lr_ = Scalar(1e-3);
  Scalar wd_ = 0;
  Scalar beta1_ = Scalar(0.9), beta2_ = Scalar(0.999), eps_ = Scalar(1e-8);
  long t_ = 0;
};

}  // namespace dcpt::nn
