#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <vector>

#include "dcpt/errors.hpp"
#include "dcpt/image.hpp"
#include "dcpt/nn/graph.hpp"

namespace dcpt {

struct FocalParams {
  double gamma = 2.0;
  double alpha_t = 0.25;
};

struct LossWeights {
  double alpha = 1.0;  // weight on the pixel term
};

namespace detail {

template <typename Scalar>
Eigen::Array<Scalar, Eigen::Dynamic, 1> softmax(
    const Eigen::Ref<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>& logits) {
  Eigen::Array<Scalar, Eigen::Dynamic, 1> e =
      (logits - logits.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace detail

// -alpha_t * (1 - p_t)^gamma * log(p_t), p_t = softmax(logits)[target].
template <typename Scalar>
Scalar focal_loss(const Eigen::Array<Scalar, Eigen::Dynamic, 1>& logits,
                  int target, const FocalParams& fp) {
  if (target < 0 || target >= logits.size())
    throw ValidationError("focal_loss: target out of range");
  if (!logits.isFinite().all())
    throw NumericError("focal_loss: non-finite logits");
  auto p = detail::softmax<Scalar>(logits);
  const Scalar pt = p[target];
  // log p_t computed stably from the log-sum-exp form
  const Scalar m = logits.maxCoeff();
  const Scalar log_pt = logits[target] - m - std::log((logits - m).exp().sum());
  return -Scalar(fp.alpha_t) *
         std::pow(Scalar(1) - pt, Scalar(fp.gamma)) * log_pt;
}

// Analytic d focal / d logits. Independent of the autodiff graph; shared by
// the training-time node and the finite-difference tests.
template <typename Scalar>
Eigen::Array<Scalar, Eigen::Dynamic, 1> focal_loss_grad(
    const Eigen::Array<Scalar, Eigen::Dynamic, 1>& logits, int target,
    const FocalParams& fp) {
  if (target < 0 || target >= logits.size())
    throw ValidationError("focal_loss_grad: target out of range");
  auto p = detail::softmax<Scalar>(logits);
  const Scalar pt = p[target];
  const Scalar m = logits.maxCoeff();
  const Scalar log_pt = logits[target] - m - std::log((logits - m).exp().sum());
  const Scalar g = Scalar(fp.gamma);
  const Scalar one_m = Scalar(1) - pt;
  // dL/dp_t; the (1-p_t)^(g-1) factor is zero in the limit p_t -> 1 for g>0
  Scalar dL_dpt;
  if (g == Scalar(0)) {
    dL_dpt = -Scalar(fp.alpha_t) / pt;
  } else {
    dL_dpt = -Scalar(fp.alpha_t) *
             (-g * std::pow(one_m, g - Scalar(1)) * log_pt +
              std::pow(one_m, g) / pt);
  }
  Eigen::Array<Scalar, Eigen::Dynamic, 1> grad(logits.size());
  for (int j = 0; j < logits.size(); ++j) {
    const Scalar kron = (j == target) ? Scalar(1) : Scalar(0);
    grad[j] = dL_dpt * pt * (kron - p[j]);
  }
  return grad;
}

template <typename Scalar>
Scalar cross_entropy(const Eigen::Array<Scalar, Eigen::Dynamic, 1>& logits,
                     int target) {
  return focal_loss<Scalar>(logits, target, FocalParams{0.0, 1.0});
}

inline double l1_pixel(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ValidationError("l1_pixel: shape mismatch");
  double acc = 0;
  for (int c = 0; c < 3; ++c)
    acc += (a.ch[c].cast<double>() - b.ch[c].cast<double>()).abs().sum();
  return acc / (3.0 * a.height() * a.width());
}

inline double total_dcpt(double l_pix, double l_cls, const LossWeights& w) {
  return w.alpha * l_pix + l_cls;
}

inline double total_guide(double l_pix, double l_ce, const LossWeights& w) {
  return w.alpha * l_pix + l_ce;
}

// ---------------------------------------------------------------------------
// graph node: batch-mean focal loss on logits [N, K]

template <typename Scalar>
nn::Var<Scalar> focal_loss_node(const nn::Var<Scalar>& logits,
                                const std::vector<int>& targets,
                                const FocalParams& fp) {
  if (logits->val.shape.size() != 2)
    throw ValidationError("focal_loss_node: logits must be 2-d");
  const int N = logits->val.dim(0), K = logits->val.dim(1);
  if (static_cast<int>(targets.size()) != N)
    throw ValidationError("focal_loss_node: target count mismatch");
  nn::Tensor<Scalar> out({1});
  Scalar acc = 0;
  for (int n = 0; n < N; ++n) {
    Eigen::Array<Scalar, Eigen::Dynamic, 1> row =
        logits->val.data.segment(static_cast<long>(n) * K, K);
    acc += focal_loss<Scalar>(row, targets[n], fp);
  }
  out.data[0] = acc / Scalar(N);
  if (!std::isfinite(double(out.data[0])))
    throw NumericError("focal_loss_node: non-finite loss");
  auto tgt = std::make_shared<std::vector<int>>(targets);
  auto bp = [tgt, N, K, fp](nn::Node<Scalar>& node) {
    auto& logits = node.parents[0];
    if (!logits->needs_grad) return;
    logits->ensure_grad();
    const Scalar g0 = node.grad.data[0] / Scalar(N);
    for (int n = 0; n < N; ++n) {
      Eigen::Array<Scalar, Eigen::Dynamic, 1> row =
          logits->val.data.segment(static_cast<long>(n) * K, K);
      logits->grad.data.segment(static_cast<long>(n) * K, K) +=
          g0 * focal_loss_grad<Scalar>(row, (*tgt)[static_cast<size_t>(n)], fp);
    }
  };
  return nn::make_node<Scalar>(std::move(out), {logits}, bp);
}

template <typename Scalar>
nn::Var<Scalar> cross_entropy_node(const nn::Var<Scalar>& logits,
                                   const std::vector<int>& targets) {
  return focal_loss_node<Scalar>(logits, targets, FocalParams{0.0, 1.0});
}

}  // namespace dcpt
