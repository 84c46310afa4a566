#ifndef CISOD_AUTODIFF_HPP_
#define CISOD_AUTODIFF_HPP_

#include <functional>
#include <memory>
#include <vector>

#include "cisod/tensor.hpp"

namespace cisod::ad {

// Reverse-mode tape. Graphs are built per forward pass; leaves (parameters,
// inputs) persist across passes and accumulate gradients until zeroed.
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor val;
  Tensor grad;
  bool requires_grad = false;
  bool grad_ready = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backfn;
  const char* op = "leaf";

  Tensor& g() {
    if (!grad_ready) {
      grad = Tensor::zeros(val.shape());
      grad_ready = true;
    }
    return grad;
  }
  void zero_grad() {
    if (grad_ready) grad.fill(0.0);
  }
};

Var leaf(Tensor t, bool requires_grad = false);
Var constant(Tensor t);
Var constant_scalar(double v);
Var detach(const Var& v);

// Backpropagate from a scalar root.
void backward(const Var& root);

// elementwise; same-rank broadcasting (each dim equal or 1)
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

Var neg(const Var& x);
Var affine(const Var& x, double a, double b);  // a*x + b
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var sqrt(const Var& x);
Var clamp01(const Var& x);
Var square(const Var& x);
Var abs(const Var& x);

Var softmax_lastdim(const Var& x);
Var mean_lastdim_keep(const Var& x);
Var sum_all(const Var& x);
Var mean_all(const Var& x);

Var reshape(const Var& x, Shape shape);
Var transpose_last2(const Var& x);
Var concat_channels(const std::vector<Var>& xs);

// (M,K)x(K,N), (B,M,K)x(B,K,N) or (B,M,K)x(K,N)
Var matmul(const Var& a, const Var& b);

// x: NCHW, w: [Co,Ci,kh,kw], b: [Co] (may be null)
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var maxpool2d(const Var& x, int k, int stride, int pad);
Var avgpool2x2(const Var& x);

Var resize_bilinear(const Var& x, std::int64_t out_h, std::int64_t out_w);
inline Var upsample2(const Var& x) { return resize_bilinear(x, x->val.dim(2) * 2, x->val.dim(3) * 2); }

// depthwise valid correlation with a fixed (non-learned) 2-D kernel
Var blur_valid(const Var& x, const Tensor& kernel);

// NCHW -> N x 1 x H x W, per-site max over channels of |x|
Var channel_max_abs(const Var& x);

Var mse(const Var& a, const Var& b);
// target is constant; mean over all elements, numerically stable
Var bce_with_logits_mean(const Var& logits, const Var& target);

// mean over all elements of (x-y)^2 where y is treated as data
inline double value0(const Var& v) { return v->val[0]; }

}  // namespace cisod::ad

#endif  // CISOD_AUTODIFF_HPP_
