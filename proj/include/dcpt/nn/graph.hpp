#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "dcpt/nn/tensor.hpp"

namespace dcpt::nn {

// Define-by-run reverse-mode graph. Nodes own their value; gradients are
// allocated lazily during backward(). A node participates in backward only
// if it is a parameter (requires_grad) or some ancestor is.
template <typename Scalar>
struct Node {
  Tensor<Scalar> val;
  Tensor<Scalar> grad;  // empty until backward touches it
  bool requires_grad = false;
  bool needs_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // accumulates into parents' grads

  void ensure_grad() {
    if (grad.numel() != val.numel()) grad = Tensor<Scalar>::zeros(val.shape);
  }
};

template <typename Scalar>
using Var = std::shared_ptr<Node<Scalar>>;

template <typename Scalar>
Var<Scalar> make_node(Tensor<Scalar> val, std::vector<Var<Scalar>> parents = {},
                      std::function<void(Node<Scalar>&)> backprop = nullptr) {
  auto n = std::make_shared<Node<Scalar>>();
  n->val = std::move(val);
  n->parents = std::move(parents);
  n->backprop = std::move(backprop);
  for (const auto& p : n->parents)
    if (p->needs_grad) n->needs_grad = true;
  return n;
}

template <typename Scalar>
Var<Scalar> constant(Tensor<Scalar> t) {
  return make_node(std::move(t));
}

template <typename Scalar>
Var<Scalar> parameter(Tensor<Scalar> t) {
  auto n = make_node(std::move(t));
  n->requires_grad = true;
  n->needs_grad = true;
  return n;
}

// Reverse-topological backward from a scalar root.
template <typename Scalar>
void backward(const Var<Scalar>& root) {
  if (root->val.numel() != 1)
    throw ValidationError("backward: root must be scalar");
  std::vector<Node<Scalar>*> order;
  std::unordered_set<Node<Scalar>*> pushed;
  // iterative post-order DFS; each node enters the stack at most once
  std::vector<std::pair<Node<Scalar>*, size_t>> stack{{root.get(), 0}};
  pushed.insert(root.get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node<Scalar>* p = n->parents[i++].get();
      if (p->needs_grad && pushed.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad.data[0] = Scalar(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Scalar>* n = *it;
    if (n->backprop && n->grad.numel() == n->val.numel()) n->backprop(*n);
  }
}

// ---------------------------------------------------------------------------
// elementwise ops

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (!a->val.same_shape(b->val))
    throw ValidationError("add: shape mismatch " +
                          Tensor<Scalar>::shape_str(a->val.shape) + " vs " +
                          Tensor<Scalar>::shape_str(b->val.shape));
  Tensor<Scalar> out(a->val.shape);
  out.data = a->val.data + b->val.data;
  return make_node<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& n) {
    for (int k = 0; k < 2; ++k) {
      auto& p = n.parents[static_cast<size_t>(k)];
      if (!p->needs_grad) continue;
      p->ensure_grad();
      p->grad.data += n.grad.data;
    }
  });
}

template <typename Scalar>
Var<Scalar> scale_const(const Var<Scalar>& a, Scalar c) {
  Tensor<Scalar> out(a->val.shape);
  out.data = a->val.data * c;
  return make_node<Scalar>(std::move(out), {a}, [c](Node<Scalar>& n) {
    auto& p = n.parents[0];
    if (!p->needs_grad) return;
    p->ensure_grad();
    p->grad.data += n.grad.data * c;
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& a) {
  Tensor<Scalar> out(a->val.shape);
  out.data = a->val.data.max(Scalar(0));
  return make_node<Scalar>(std::move(out), {a}, [](Node<Scalar>& n) {
    auto& p = n.parents[0];
    if (!p->needs_grad) return;
    p->ensure_grad();
    p->grad.data +=
        n.grad.data * (p->val.data > Scalar(0)).template cast<Scalar>();
  });
}

// x * w where w is a single learnable scalar (the per-level feature scale).
// dL/dw = <x, dL/dy>.
template <typename Scalar>
Var<Scalar> scale_by(const Var<Scalar>& x, const Var<Scalar>& w) {
  if (w->val.numel() != 1) throw ValidationError("scale_by: w must be scalar");
  Tensor<Scalar> out(x->val.shape);
  out.data = x->val.data * w->val.data[0];
  return make_node<Scalar>(std::move(out), {x, w}, [](Node<Scalar>& n) {
    auto& x = n.parents[0];
    auto& w = n.parents[1];
    if (x->needs_grad) {
      x->ensure_grad();
      x->grad.data += n.grad.data * w->val.data[0];
    }
    if (w->needs_grad) {
      w->ensure_grad();
      w->grad.data[0] += (x->val.data * n.grad.data).sum();
    }
  });
}

// ---------------------------------------------------------------------------
// conv2d, NCHW, square kernel, zero padding

namespace detail {

template <typename Scalar>
void im2col(const Tensor<Scalar>& x, int K, int stride, int pad,
            MatrixRM<Scalar>& col, int OH, int OW) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  col.setZero(static_cast<long>(N) * OH * OW, static_cast<long>(C) * K * K);
  for (int n = 0; n < N; ++n)
    for (int oh = 0; oh < OH; ++oh)
      for (int ow = 0; ow < OW; ++ow) {
        const long r = (static_cast<long>(n) * OH + oh) * OW + ow;
        for (int c = 0; c < C; ++c) {
          const Scalar* xc = x.data.data() + ((static_cast<long>(n) * C + c) * H) * W;
          for (int ki = 0; ki < K; ++ki) {
            const int ih = oh * stride - pad + ki;
            if (ih < 0 || ih >= H) continue;
            for (int kj = 0; kj < K; ++kj) {
              const int iw = ow * stride - pad + kj;
              if (iw < 0 || iw >= W) continue;
              col(r, (static_cast<long>(c) * K + ki) * K + kj) =
                  xc[static_cast<long>(ih) * W + iw];
            }
          }
        }
      }
}

template <typename Scalar>
void col2im_add(const MatrixRM<Scalar>& col, int N, int C, int H, int W, int K,
                int stride, int pad, Tensor<Scalar>& dx, int OH, int OW) {
  for (int n = 0; n < N; ++n)
    for (int oh = 0; oh < OH; ++oh)
      for (int ow = 0; ow < OW; ++ow) {
        const long r = (static_cast<long>(n) * OH + oh) * OW + ow;
        for (int c = 0; c < C; ++c) {
          Scalar* dc = dx.data.data() + ((static_cast<long>(n) * C + c) * H) * W;
          for (int ki = 0; ki < K; ++ki) {
            const int ih = oh * stride - pad + ki;
            if (ih < 0 || ih >= H) continue;
            for (int kj = 0; kj < K; ++kj) {
              const int iw = ow * stride - pad + kj;
              if (iw < 0 || iw >= W) continue;
              dc[static_cast<long>(ih) * W + iw] +=
                  col(r, (static_cast<long>(c) * K + ki) * K + kj);
            }
          }
        }
      }
}

}  // namespace detail

// w: [OC, C, K, K], b: [OC]
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& w,
                   const Var<Scalar>& b, int stride = 1, int pad = -1) {
  if (x->val.shape.size() != 4 || w->val.shape.size() != 4)
    throw ValidationError("conv2d: x and w must be 4-d");
  const int N = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2),
            W = x->val.dim(3);
  const int OC = w->val.dim(0), K = w->val.dim(2);
  if (w->val.dim(1) != C)
    throw ValidationError("conv2d: channel mismatch, input has " +
                          std::to_string(C) + " weight expects " +
                          std::to_string(w->val.dim(1)));
  if (b->val.numel() != OC) throw ValidationError("conv2d: bias size mismatch");
  if (pad < 0) pad = K / 2;
  const int OH = (H + 2 * pad - K) / stride + 1;
  const int OW = (W + 2 * pad - K) / stride + 1;

  auto col = std::make_shared<MatrixRM<Scalar>>();
  detail::im2col(x->val, K, stride, pad, *col, OH, OW);
  Eigen::Map<const MatrixRM<Scalar>> wm(w->val.data.data(), OC,
                                        static_cast<long>(C) * K * K);
  MatrixRM<Scalar> outm = *col * wm.transpose();  // [N*OH*OW, OC]
  outm.rowwise() +=
      Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(
          b->val.data.data(), OC);

  Tensor<Scalar> out({N, OC, OH, OW});
  for (int n = 0; n < N; ++n)
    for (int oh = 0; oh < OH; ++oh)
      for (int ow = 0; ow < OW; ++ow) {
        const long r = (static_cast<long>(n) * OH + oh) * OW + ow;
        for (int oc = 0; oc < OC; ++oc)
          out.data[((static_cast<long>(n) * OC + oc) * OH + oh) * OW + ow] =
              outm(r, oc);
      }

  auto bp = [col, N, C, H, W, OC, K, stride, pad, OH, OW](Node<Scalar>& node) {
    auto& x = node.parents[0];
    auto& w = node.parents[1];
    auto& b = node.parents[2];
    // gather dOut into [N*OH*OW, OC]
    MatrixRM<Scalar> dout(static_cast<long>(N) * OH * OW, OC);
    for (int n = 0; n < N; ++n)
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow) {
          const long r = (static_cast<long>(n) * OH + oh) * OW + ow;
          for (int oc = 0; oc < OC; ++oc)
            dout(r, oc) =
                node.grad
                    .data[((static_cast<long>(n) * OC + oc) * OH + oh) * OW + ow];
        }
    if (w->needs_grad) {
      w->ensure_grad();
      MatrixRM<Scalar> dw = dout.transpose() * *col;  // [OC, C*K*K]
      Eigen::Map<MatrixRM<Scalar>>(w->grad.data.data(), OC,
                                   static_cast<long>(C) * K * K) += dw;
    }
    if (b->needs_grad) {
      b->ensure_grad();
      Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(b->grad.data.data(),
                                                           OC) +=
          dout.colwise().sum().transpose();
    }
    if (x->needs_grad) {
      x->ensure_grad();
      Eigen::Map<const MatrixRM<Scalar>> wm(w->val.data.data(), OC,
                                            static_cast<long>(C) * K * K);
      MatrixRM<Scalar> dcol = dout * wm;  // [N*OH*OW, C*K*K]
      detail::col2im_add(dcol, N, C, H, W, K, stride, pad, x->grad, OH, OW);
    }
  };
  return make_node<Scalar>(std::move(out), {x, w, b}, bp);
}

// ---------------------------------------------------------------------------
// normalization, pooling, linear

// LayerNorm over the channel axis at every (n, h, w); gain/bias per channel.
template <typename Scalar>
Var<Scalar> layer_norm_channels(const Var<Scalar>& x, const Var<Scalar>& gain,
                                const Var<Scalar>& bias,
                                Scalar eps = Scalar(1e-5)) {
  if (x->val.shape.size() != 4)
    throw ValidationError("layer_norm_channels: x must be 4-d");
  const int N = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2),
            W = x->val.dim(3);
  if (gain->val.numel() != C || bias->val.numel() != C)
    throw ValidationError("layer_norm_channels: gain/bias size mismatch");
  const long HW = static_cast<long>(H) * W;
  Tensor<Scalar> out(x->val.shape);
  // cache normalized values and inverse stddev per position
  auto xhat = std::make_shared<Tensor<Scalar>>(x->val.shape);
  auto istd = std::make_shared<ArrayX<Scalar>>(static_cast<long>(N) * HW);
  for (int n = 0; n < N; ++n)
    for (long p = 0; p < HW; ++p) {
      Scalar mean = 0, var = 0;
      for (int c = 0; c < C; ++c)
        mean += x->val.data[(static_cast<long>(n) * C + c) * HW + p];
      mean /= Scalar(C);
      for (int c = 0; c < C; ++c) {
        const Scalar d =
            x->val.data[(static_cast<long>(n) * C + c) * HW + p] - mean;
        var += d * d;
      }
      var /= Scalar(C);
      const Scalar is = Scalar(1) / std::sqrt(var + eps);
      (*istd)[n * HW + p] = is;
      for (int c = 0; c < C; ++c) {
        const long i = (static_cast<long>(n) * C + c) * HW + p;
        xhat->data[i] = (x->val.data[i] - mean) * is;
        out.data[i] = gain->val.data[c] * xhat->data[i] + bias->val.data[c];
      }
    }

  auto bp = [xhat, istd, N, C, HW](Node<Scalar>& node) {
    auto& x = node.parents[0];
    auto& gain = node.parents[1];
    auto& bias = node.parents[2];
    if (gain->needs_grad) gain->ensure_grad();
    if (bias->needs_grad) bias->ensure_grad();
    if (x->needs_grad) x->ensure_grad();
    for (int n = 0; n < N; ++n)
      for (long p = 0; p < HW; ++p) {
        Scalar sum_dy_xhat = 0, sum_dy = 0;
        for (int c = 0; c < C; ++c) {
          const long i = (static_cast<long>(n) * C + c) * HW + p;
          const Scalar dy = node.grad.data[i] * gain->val.data[c];
          sum_dy += dy;
          sum_dy_xhat += dy * xhat->data[i];
          if (gain->needs_grad)
            gain->grad.data[c] += node.grad.data[i] * xhat->data[i];
          if (bias->needs_grad) bias->grad.data[c] += node.grad.data[i];
        }
        if (x->needs_grad) {
          const Scalar is = (*istd)[n * HW + p];
          for (int c = 0; c < C; ++c) {
            const long i = (static_cast<long>(n) * C + c) * HW + p;
            const Scalar dy = node.grad.data[i] * gain->val.data[c];
            x->grad.data[i] += is * (dy - (sum_dy + xhat->data[i] * sum_dy_xhat) /
                                              Scalar(C));
          }
        }
      }
  };
  return make_node<Scalar>(std::move(out), {x, gain, bias}, bp);
}

template <typename Scalar>
Var<Scalar> avg_pool2d(const Var<Scalar>& x, int factor) {
  if (x->val.shape.size() != 4) throw ValidationError("avg_pool2d: x must be 4-d");
  const int N = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2),
            W = x->val.dim(3);
  if (factor < 1 || H % factor != 0 || W % factor != 0)
    throw ValidationError("avg_pool2d: spatial dims not divisible by factor " +
                          std::to_string(factor));
  if (factor == 1) return x;
  const int OH = H / factor, OW = W / factor;
  Tensor<Scalar> out({N, C, OH, OW});
  const Scalar inv = Scalar(1) / Scalar(factor * factor);
  for (long nc = 0; nc < static_cast<long>(N) * C; ++nc) {
    const Scalar* src = x->val.data.data() + nc * H * W;
    Scalar* dst = out.data.data() + nc * OH * OW;
    for (int oh = 0; oh < OH; ++oh)
      for (int ow = 0; ow < OW; ++ow) {
        Scalar s = 0;
        for (int i = 0; i < factor; ++i)
          for (int j = 0; j < factor; ++j)
            s += src[(static_cast<long>(oh) * factor + i) * W + ow * factor + j];
        dst[static_cast<long>(oh) * OW + ow] = s * inv;
      }
  }
  auto bp = [N, C, H, W, OH, OW, factor, inv](Node<Scalar>& node) {
    auto& x = node.parents[0];
    if (!x->needs_grad) return;
    x->ensure_grad();
    for (long nc = 0; nc < static_cast<long>(N) * C; ++nc) {
      const Scalar* g = node.grad.data.data() + nc * OH * OW;
      Scalar* dx = x->grad.data.data() + nc * H * W;
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow) {
          const Scalar gv = g[static_cast<long>(oh) * OW + ow] * inv;
          for (int i = 0; i < factor; ++i)
            for (int j = 0; j < factor; ++j)
              dx[(static_cast<long>(oh) * factor + i) * W + ow * factor + j] += gv;
        }
    }
  };
  return make_node<Scalar>(std::move(out), {x}, bp);
}

// [N,C,H,W] -> [N,C]
template <typename Scalar>
Var<Scalar> global_avg_pool(const Var<Scalar>& x) {
  if (x->val.shape.size() != 4)
    throw ValidationError("global_avg_pool: x must be 4-d");
  const int N = x->val.dim(0), C = x->val.dim(1);
  const long HW = static_cast<long>(x->val.dim(2)) * x->val.dim(3);
  Tensor<Scalar> out({N, C});
  for (long nc = 0; nc < static_cast<long>(N) * C; ++nc)
    out.data[nc] = x->val.data.segment(nc * HW, HW).mean();
  auto bp = [N, C, HW](Node<Scalar>& node) {
    auto& x = node.parents[0];
    if (!x->needs_grad) return;
    x->ensure_grad();
    for (long nc = 0; nc < static_cast<long>(N) * C; ++nc)
      x->grad.data.segment(nc * HW, HW) += node.grad.data[nc] / Scalar(HW);
  };
  return make_node<Scalar>(std::move(out), {x}, bp);
}

// x: [N,D], w: [K,D], b: [K] -> [N,K]
template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& x, const Var<Scalar>& w,
                   const Var<Scalar>& b) {
  if (x->val.shape.size() != 2 || w->val.shape.size() != 2)
    throw ValidationError("linear: x and w must be 2-d");
  const int N = x->val.dim(0), D = x->val.dim(1), K = w->val.dim(0);
  if (w->val.dim(1) != D || b->val.numel() != K)
    throw ValidationError("linear: dimension mismatch");
  Eigen::Map<const MatrixRM<Scalar>> xm(x->val.data.data(), N, D);
  Eigen::Map<const MatrixRM<Scalar>> wm(w->val.data.data(), K, D);
  MatrixRM<Scalar> outm = xm * wm.transpose();
  outm.rowwise() += Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(
      b->val.data.data(), K);
  Tensor<Scalar> out({N, K});
  Eigen::Map<MatrixRM<Scalar>>(out.data.data(), N, K) = outm;
  auto bp = [N, D, K](Node<Scalar>& node) {
    auto& x = node.parents[0];
    auto& w = node.parents[1];
    auto& b = node.parents[2];
    Eigen::Map<const MatrixRM<Scalar>> g(node.grad.data.data(), N, K);
    if (w->needs_grad) {
      w->ensure_grad();
      Eigen::Map<const MatrixRM<Scalar>> xm(x->val.data.data(), N, D);
      Eigen::Map<MatrixRM<Scalar>>(w->grad.data.data(), K, D) +=
          g.transpose() * xm;
    }
    if (b->needs_grad) {
      b->ensure_grad();
      Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(b->grad.data.data(),
                                                           K) +=
          g.colwise().sum().transpose();
    }
    if (x->needs_grad) {
      x->ensure_grad();
      Eigen::Map<const MatrixRM<Scalar>> wm(w->val.data.data(), K, D);
      Eigen::Map<MatrixRM<Scalar>>(x->grad.data.data(), N, D) += g * wm;
    }
  };
  return make_node<Scalar>(std::move(out), {x, w, b}, bp);
}

// ---------------------------------------------------------------------------
// losses as graph nodes

// mean |pred - target| over all elements; target is plain data.
template <typename Scalar>
Var<Scalar> l1_loss(const Var<Scalar>& pred, const Tensor<Scalar>& target) {
  if (!pred->val.same_shape(target))
    throw ValidationError("l1_loss: shape mismatch");
  const long n = pred->val.numel();
  Tensor<Scalar> out({1});
  out.data[0] = (pred->val.data - target.data).abs().mean();
  auto diff = std::make_shared<ArrayX<Scalar>>(pred->val.data - target.data);
  auto bp = [diff, n](Node<Scalar>& node) {
    auto& pred = node.parents[0];
    if (!pred->needs_grad) return;
    pred->ensure_grad();
    const Scalar g = node.grad.data[0] / Scalar(n);
    pred->grad.data += g * diff->sign();
  };
  return make_node<Scalar>(std::move(out), {pred}, bp);
}

// mean squared difference; smooth, used where subgradients would bite.
template <typename Scalar>
Var<Scalar> mse_loss(const Var<Scalar>& pred, const Tensor<Scalar>& target) {
  if (!pred->val.same_shape(target))
    throw ValidationError("mse_loss: shape mismatch");
  const long n = pred->val.numel();
  Tensor<Scalar> out({1});
  auto diff = std::make_shared<ArrayX<Scalar>>(pred->val.data - target.data);
  out.data[0] = diff->square().mean();
  auto bp = [diff, n](Node<Scalar>& node) {
    auto& pred = node.parents[0];
    if (!pred->needs_grad) return;
    pred->ensure_grad();
    pred->grad.data += node.grad.data[0] * Scalar(2) / Scalar(n) * (*diff);
  };
  return make_node<Scalar>(std::move(out), {pred}, bp);
}

}  // namespace dcpt::nn
