#include "cisod/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

namespace cisod::ad {

Var leaf(Tensor t, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->val = std::move(t);
  n->requires_grad = requires_grad;
  return n;
}

Var constant(Tensor t) { return leaf(std::move(t), false); }
Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }

Var detach(const Var& v) { return constant(v->val); }

static Var make(Tensor val, std::vector<Var> parents, std::function<void(Node&)> backfn,
                const char* op) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  n->op = op;
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  n->requires_grad = rg;
  if (rg) {
    n->parents = std::move(parents);
    n->backfn = std::move(backfn);
  }
  return n;
}

void backward(const Var& root) {
  check(root->val.numel() == 1, "backward: root must be scalar");
  if (!root->requires_grad) return;
  // topological order, children before parents
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx].get();
      ++idx;
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->g()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backfn) n->backfn(*n);
  }
}

// ------------------------------------------------------------------
// broadcasting helpers

static Shape broadcast_shape(const Shape& a, const Shape& b) {
  check(a.size() == b.size(),
        "broadcast: rank mismatch " + shape_str(a) + " vs " + shape_str(b));
  Shape out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) {
      out[i] = a[i];
    } else if (a[i] == 1 || b[i] == 1) {
      out[i] = std::max(a[i], b[i]);
    } else {
      check(false, "broadcast: incompatible " + shape_str(a) + " vs " + shape_str(b));
    }
  }
  return out;
}

namespace {

struct BcastIter {
  const Shape out;
  std::vector<std::int64_t> stride_a, stride_b;

  BcastIter(const Shape& o, const Shape& sa, const Shape& sb) : out(o) {
    const int r = static_cast<int>(o.size());
    stride_a.assign(r, 0);
    stride_b.assign(r, 0);
    std::int64_t ra = 1, rb = 1;
    for (int i = r - 1; i >= 0; --i) {
      stride_a[i] = (sa[i] == 1) ? 0 : ra;
      stride_b[i] = (sb[i] == 1) ? 0 : rb;
      ra *= sa[i];
      rb *= sb[i];
    }
  }

  template <typename F>
  void for_each(F&& f) const {
    const int r = static_cast<int>(out.size());
    std::vector<std::int64_t> idx(r, 0);
    std::int64_t n = 1;
    for (auto d : out) n *= d;
    std::int64_t ia = 0, ib = 0;
    for (std::int64_t flat = 0; flat < n; ++flat) {
      f(flat, ia, ib);
      for (int i = r - 1; i >= 0; --i) {
        ++idx[i];
        ia += stride_a[i];
        ib += stride_b[i];
        if (idx[i] < out[i]) break;
        ia -= stride_a[i] * out[i];
        ib -= stride_b[i] * out[i];
        idx[i] = 0;
      }
    }
  }
};

}  // namespace

template <typename FwdF, typename BwdA, typename BwdB>
static Var binary_op(const Var& a, const Var& b, FwdF fwd, BwdA bwd_a, BwdB bwd_b,
                     const char* op) {
  const Tensor& av = a->val;
  const Tensor& bv = b->val;
  if (av.same_shape(bv)) {
    Tensor out(av.shape());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i]);
    return make(std::move(out), {a, b},
                [a, b, bwd_a, bwd_b](Node& self) {
                  const std::int64_t n2 = self.val.numel();
                  if (a->requires_grad) {
                    Tensor& ga = a->g();
                    for (std::int64_t i = 0; i < n2; ++i)
                      ga[i] += self.grad[i] * bwd_a(a->val[i], b->val[i], self.val[i]);
                  }
                  if (b->requires_grad) {
                    Tensor& gb = b->g();
                    for (std::int64_t i = 0; i < n2; ++i)
                      gb[i] += self.grad[i] * bwd_b(a->val[i], b->val[i], self.val[i]);
                  }
                },
                op);
  }
  Shape os = broadcast_shape(av.shape(), bv.shape());
  BcastIter it(os, av.shape(), bv.shape());
  Tensor out(os);
  it.for_each([&](std::int64_t flat, std::int64_t ia, std::int64_t ib) {
    out[flat] = fwd(av[ia], bv[ib]);
  });
  return make(std::move(out), {a, b},
              [a, b, it, bwd_a, bwd_b](Node& self) {
                it.for_each([&](std::int64_t flat, std::int64_t ia, std::int64_t ib) {
                  const double g = self.grad[flat];
                  if (a->requires_grad)
                    a->g()[ia] += g * bwd_a(a->val[ia], b->val[ib], self.val[flat]);
                  if (b->requires_grad)
                    b->g()[ib] += g * bwd_b(a->val[ia], b->val[ib], self.val[flat]);
                });
              },
              op);
}

Var add(const Var& a, const Var& b) {
  return binary_op(
      a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; },
      "add");
}

Var sub(const Var& a, const Var& b) {
  return binary_op(
      a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; },
      "sub");
}

Var mul(const Var& a, const Var& b) {
  return binary_op(
      a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; },
      "mul");
}

Var div(const Var& a, const Var& b) {
  return binary_op(
      a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; }, "div");
}

// ------------------------------------------------------------------
// unary ops

template <typename FwdF, typename BwdF>
static Var unary_op(const Var& x, FwdF fwd, BwdF bwd, const char* op) {
  Tensor out(x->val.shape());
  const std::int64_t n = out.numel();
  for (std::int64_t i = 0; i < n; ++i) out[i] = fwd(x->val[i]);
  return make(std::move(out), {x},
              [x, bwd](Node& self) {
                Tensor& gx = x->g();
                const std::int64_t n2 = self.val.numel();
                for (std::int64_t i = 0; i < n2; ++i)
                  gx[i] += self.grad[i] * bwd(x->val[i], self.val[i]);
              },
              op);
}

Var neg(const Var& x) {
  return unary_op(x, [](double v) { return -v; }, [](double, double) { return -1.0; }, "neg");
}

Var affine(const Var& x, double a, double b) {
  return unary_op(
      x, [a, b](double v) { return a * v + b; }, [a](double, double) { return a; }, "affine");
}

Var relu(const Var& x) {
  return unary_op(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; }, "relu");
}

Var sigmoid(const Var& x) {
  return unary_op(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Var exp(const Var& x) {
  return unary_op(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; },
                  "exp");
}

Var log(const Var& x) {
  return unary_op(x, [](double v) { return std::log(v); },
                  [](double v, double) { return 1.0 / v; }, "log");
}

Var sqrt(const Var& x) {
  return unary_op(x, [](double v) { return std::sqrt(v); },
                  [](double, double y) { return 0.5 / y; }, "sqrt");
}

Var clamp01(const Var& x) {
  return unary_op(
      x, [](double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); },
      [](double v, double) { return (v > 0.0 && v < 1.0) ? 1.0 : 0.0; }, "clamp01");
}

Var square(const Var& x) {
  return unary_op(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; },
                  "square");
}

Var abs(const Var& x) {
  return unary_op(
      x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }, "abs");
}

// ------------------------------------------------------------------
// softmax / reductions

Var softmax_lastdim(const Var& x) {
  const Tensor& xv = x->val;
  const std::int64_t L = xv.dim(xv.rank() - 1);
  const std::int64_t rows = xv.numel() / L;
  Tensor out(xv.shape());
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * L;
    double* o = out.data() + r * L;
    double m = in[0];
    for (std::int64_t i = 1; i < L; ++i) m = std::max(m, in[i]);
    double s = 0.0;
    for (std::int64_t i = 0; i < L; ++i) {
      o[i] = std::exp(in[i] - m);
      s += o[i];
    }
    for (std::int64_t i = 0; i < L; ++i) o[i] /= s;
  }
  return make(std::move(out), {x},
              [x, L, rows](Node& self) {
                Tensor& gx = x->g();
                for (std::int64_t r = 0; r < rows; ++r) {
                  const double* y = self.val.data() + r * L;
                  const double* g = self.grad.data() + r * L;
                  double dot = 0.0;
                  for (std::int64_t i = 0; i < L; ++i) dot += y[i] * g[i];
                  double* out_g = gx.data() + r * L;
                  for (std::int64_t i = 0; i < L; ++i) out_g[i] += y[i] * (g[i] - dot);
                }
              },
              "softmax");
}

Var mean_lastdim_keep(const Var& x) {
  const Tensor& xv = x->val;
  const std::int64_t L = xv.dim(xv.rank() - 1);
  const std::int64_t rows = xv.numel() / L;
  Shape os = xv.shape();
  os.back() = 1;
  Tensor out(os);
  for (std::int64_t r = 0; r < rows; ++r) {
    double s = 0.0;
    const double* in = xv.data() + r * L;
    for (std::int64_t i = 0; i < L; ++i) s += in[i];
    out[r] = s / static_cast<double>(L);
  }
  return make(std::move(out), {x},
              [x, L, rows](Node& self) {
                Tensor& gx = x->g();
                for (std::int64_t r = 0; r < rows; ++r) {
                  const double g = self.grad[r] / static_cast<double>(L);
                  double* p = gx.data() + r * L;
                  for (std::int64_t i = 0; i < L; ++i) p[i] += g;
                }
              },
              "mean_last");
}

Var sum_all(const Var& x) {
  Tensor out = Tensor::scalar(x->val.sum());
  return make(std::move(out), {x},
              [x](Node& self) {
                Tensor& gx = x->g();
                const double g = self.grad[0];
                for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
              },
              "sum_all");
}

Var mean_all(const Var& x) {
  const double n = static_cast<double>(x->val.numel());
  Tensor out = Tensor::scalar(x->val.sum() / n);
  return make(std::move(out), {x},
              [x, n](Node& self) {
                Tensor& gx = x->g();
                const double g = self.grad[0] / n;
                for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
              },
              "mean_all");
}

// ------------------------------------------------------------------
// shape ops

Var reshape(const Var& x, Shape shape) {
  Tensor out = x->val.reshaped(std::move(shape));
  return make(std::move(out), {x},
              [x](Node& self) {
                Tensor& gx = x->g();
                for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += self.grad[i];
              },
              "reshape");
}

Var transpose_last2(const Var& x) {
  const Tensor& xv = x->val;
  const int r = xv.rank();
  check(r >= 2, "transpose_last2: rank < 2");
  const std::int64_t M = xv.dim(r - 2);
  const std::int64_t N = xv.dim(r - 1);
  const std::int64_t B = xv.numel() / (M * N);
  Shape os = xv.shape();
  std::swap(os[r - 2], os[r - 1]);
  Tensor out(os);
  for (std::int64_t b = 0; b < B; ++b) {
    const double* in = xv.data() + b * M * N;
    double* o = out.data() + b * M * N;
    for (std::int64_t i = 0; i < M; ++i)
      for (std::int64_t j = 0; j < N; ++j) o[j * M + i] = in[i * N + j];
  }
  return make(std::move(out), {x},
              [x, B, M, N](Node& self) {
                Tensor& gx = x->g();
                for (std::int64_t b = 0; b < B; ++b) {
                  const double* g = self.grad.data() + b * M * N;
                  double* o = gx.data() + b * M * N;
                  for (std::int64_t i = 0; i < M; ++i)
                    for (std::int64_t j = 0; j < N; ++j) o[i * N + j] += g[j * M + i];
                }
              },
              "transpose");
}

Var concat_channels(const std::vector<Var>& xs) {
  check(!xs.empty(), "concat: empty input");
  const Tensor& first = xs[0]->val;
  check(first.rank() == 4, "concat: NCHW expected");
  const std::int64_t N = first.dim(0), H = first.dim(2), W = first.dim(3);
  std::int64_t C = 0;
  for (const auto& v : xs) {
    check(v->val.dim(0) == N && v->val.dim(2) == H && v->val.dim(3) == W,
          "concat: spatial/batch mismatch");
    C += v->val.dim(1);
  }
  Tensor out(Shape{N, C, H, W});
  const std::int64_t hw = H * W;
  std::int64_t c0 = 0;
  for (const auto& v : xs) {
    const std::int64_t ci = v->val.dim(1);
    for (std::int64_t n = 0; n < N; ++n) {
      std::memcpy(out.data() + (n * C + c0) * hw, v->val.data() + n * ci * hw,
                  sizeof(double) * static_cast<std::size_t>(ci * hw));
    }
    c0 += ci;
  }
  std::vector<Var> parents = xs;
  return make(std::move(out), std::move(parents),
              [xs, N, C, hw](Node& self) {
                std::int64_t off = 0;
                for (const auto& v : xs) {
                  const std::int64_t ci = v->val.dim(1);
                  if (v->requires_grad) {
                    Tensor& gx = v->g();
                    for (std::int64_t n = 0; n < N; ++n) {
                      const double* g = self.grad.data() + (n * C + off) * hw;
                      double* o = gx.data() + n * ci * hw;
                      for (std::int64_t i = 0; i < ci * hw; ++i) o[i] += g[i];
                    }
                  }
                  off += ci;
                }
              },
              "concat");
}

// ------------------------------------------------------------------
// matmul

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a->val;
  const Tensor& bv = b->val;
  const int ra = av.rank(), rb = bv.rank();
  check((ra == 2 && rb == 2) || (ra == 3 && rb == 3) || (ra == 3 && rb == 2),
        "matmul: unsupported ranks");
  const std::int64_t B = (ra == 3) ? av.dim(0) : 1;
  const std::int64_t M = av.dim(ra - 2), K = av.dim(ra - 1);
  const std::int64_t K2 = bv.dim(rb - 2), N = bv.dim(rb - 1);
  check(K == K2, "matmul: inner dim mismatch " + shape_str(av.shape()) + " x " +
                     shape_str(bv.shape()));
  if (rb == 3) check(bv.dim(0) == B, "matmul: batch mismatch");
  Shape os = (ra == 3) ? Shape{B, M, N} : Shape{M, N};
  Tensor out(os);
  const bool b_batched = (rb == 3);
  for (std::int64_t batch = 0; batch < B; ++batch) {
    const double* pa = av.data() + batch * M * K;
    const double* pb = bv.data() + (b_batched ? batch * K * N : 0);
    double* po = out.data() + batch * M * N;
    for (std::int64_t i = 0; i < M; ++i) {
      for (std::int64_t k = 0; k < K; ++k) {
        const double v = pa[i * K + k];
        if (v == 0.0) continue;
        const double* rowb = pb + k * N;
        double* rowo = po + i * N;
        for (std::int64_t j = 0; j < N; ++j) rowo[j] += v * rowb[j];
      }
    }
  }
  return make(std::move(out), {a, b},
              [a, b, B, M, K, N, b_batched](Node& self) {
                for (std::int64_t batch = 0; batch < B; ++batch) {
                  const double* g = self.grad.data() + batch * M * N;
                  const double* pa = a->val.data() + batch * M * K;
                  const double* pb = b->val.data() + (b_batched ? batch * K * N : 0);
                  if (a->requires_grad) {
                    double* ga = a->g().data() + batch * M * K;
                    // dA = dY * B^T
                    for (std::int64_t i = 0; i < M; ++i)
                      for (std::int64_t k = 0; k < K; ++k) {
                        double s = 0.0;
                        const double* rowg = g + i * N;
                        const double* rowb = pb + k * N;
                        for (std::int64_t j = 0; j < N; ++j) s += rowg[j] * rowb[j];
                        ga[i * K + k] += s;
                      }
                  }
                  if (b->requires_grad) {
                    double* gb = b->g().data() + (b_batched ? batch * K * N : 0);
                    // dB = A^T * dY
                    for (std::int64_t k = 0; k < K; ++k)
                      for (std::int64_t i = 0; i < M; ++i) {
                        const double v = pa[i * K + k];
                        if (v == 0.0) continue;
                        const double* rowg = g + i * N;
                        double* rowb = gb + k * N;
                        for (std::int64_t j = 0; j < N; ++j) rowb[j] += v * rowg[j];
                      }
                  }
                }
              },
              "matmul");
}

// ------------------------------------------------------------------
// conv / pooling / resize

namespace {

// output-column range for which input index wo*stride + tap - pad stays in
// [0, in_n); keeps the per-tap loops branch-free
struct TapRange {
  std::int64_t lo, hi;  // output indices [lo, hi)
};

TapRange tap_range(std::int64_t tap, std::int64_t out_n, std::int64_t in_n, int stride,
                   int pad) {
  // wo*stride + tap - pad in [0, in_n)
  const std::int64_t off = tap - pad;
  std::int64_t lo = 0;
  if (off < 0) lo = (-off + stride - 1) / stride;
  std::int64_t hi = out_n;
  const std::int64_t cap = in_n - 1 - off;
  if (cap < 0)
    hi = 0;
  else
    hi = std::min<std::int64_t>(out_n, cap / stride + 1);
  return {lo, std::max(lo, hi)};
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  const Tensor& xv = x->val;
  const Tensor& wv = w->val;
  check(xv.rank() == 4 && wv.rank() == 4, "conv2d: expects NCHW input and OIHW weight");
  const std::int64_t N = xv.dim(0), Ci = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const std::int64_t Co = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  check(wv.dim(1) == Ci, "conv2d: channel mismatch");
  const std::int64_t Ho = (H + 2 * pad - kh) / stride + 1;
  const std::int64_t Wo = (W + 2 * pad - kw) / stride + 1;
  check(Ho >= 1 && Wo >= 1, "conv2d: output would be empty");
  std::vector<TapRange> hrange(static_cast<std::size_t>(kh)), wrange(static_cast<std::size_t>(kw));
  for (std::int64_t i = 0; i < kh; ++i) hrange[static_cast<std::size_t>(i)] = tap_range(i, Ho, H, stride, pad);
  for (std::int64_t j = 0; j < kw; ++j) wrange[static_cast<std::size_t>(j)] = tap_range(j, Wo, W, stride, pad);

  Tensor out(Shape{N, Co, Ho, Wo});
  const bool has_bias = (b != nullptr);
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t co = 0; co < Co; ++co) {
      double* oplane = out.data() + (n * Co + co) * Ho * Wo;
      if (has_bias) {
        const double bias = b->val[co];
        for (std::int64_t i = 0; i < Ho * Wo; ++i) oplane[i] = bias;
      }
      for (std::int64_t ci = 0; ci < Ci; ++ci) {
        const double* xplane = xv.data() + (n * Ci + ci) * H * W;
        const double* wbase = wv.data() + (co * Ci + ci) * kh * kw;
        for (std::int64_t i = 0; i < kh; ++i) {
          const TapRange& hr = hrange[static_cast<std::size_t>(i)];
          for (std::int64_t j = 0; j < kw; ++j) {
            const double wt = wbase[i * kw + j];
            if (wt == 0.0) continue;
            const TapRange& cr = wrange[static_cast<std::size_t>(j)];
            for (std::int64_t ho = hr.lo; ho < hr.hi; ++ho) {
              const double* xrow = xplane + (ho * stride + i - pad) * W + (j - pad);
              double* orow = oplane + ho * Wo;
              if (stride == 1) {
                for (std::int64_t wo = cr.lo; wo < cr.hi; ++wo) orow[wo] += wt * xrow[wo];
              } else {
                for (std::int64_t wo = cr.lo; wo < cr.hi; ++wo)
                  orow[wo] += wt * xrow[wo * stride];
              }
            }
          }
        }
      }
    }
  }
  std::vector<Var> parents = has_bias ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
  return make(std::move(out), std::move(parents),
              [x, w, b, has_bias, stride, pad, N, Ci, H, W, Co, kh, kw, Ho, Wo, hrange,
               wrange](Node& self) {
                const Tensor& g = self.grad;
                Tensor* gx = x->requires_grad ? &x->g() : nullptr;
                Tensor* gw = w->requires_grad ? &w->g() : nullptr;
                Tensor* gb = (has_bias && b->requires_grad) ? &b->g() : nullptr;
                if (gb) {
                  for (std::int64_t n = 0; n < N; ++n)
                    for (std::int64_t co = 0; co < Co; ++co) {
                      const double* gplane = g.data() + (n * Co + co) * Ho * Wo;
                      double s = 0.0;
                      for (std::int64_t i = 0; i < Ho * Wo; ++i) s += gplane[i];
                      (*gb)[co] += s;
                    }
                }
                if (!gx && !gw) return;
                for (std::int64_t n = 0; n < N; ++n) {
                  for (std::int64_t co = 0; co < Co; ++co) {
                    const double* gplane = g.data() + (n * Co + co) * Ho * Wo;
                    for (std::int64_t ci = 0; ci < Ci; ++ci) {
                      const double* xplane = x->val.data() + (n * Ci + ci) * H * W;
                      const double* wbase = w->val.data() + (co * Ci + ci) * kh * kw;
                      double* gxplane = gx ? gx->data() + (n * Ci + ci) * H * W : nullptr;
                      double* gwbase = gw ? gw->data() + (co * Ci + ci) * kh * kw : nullptr;
                      for (std::int64_t i = 0; i < kh; ++i) {
                        const TapRange& hr = hrange[static_cast<std::size_t>(i)];
                        for (std::int64_t j = 0; j < kw; ++j) {
                          const TapRange& cr = wrange[static_cast<std::size_t>(j)];
                          const double wt = wbase[i * kw + j];
                          double gwt = 0.0;
                          for (std::int64_t ho = hr.lo; ho < hr.hi; ++ho) {
                            const std::int64_t xoff = (ho * stride + i - pad) * W + (j - pad);
                            const double* grow = gplane + ho * Wo;
                            if (gxplane && wt != 0.0) {
                              double* gxrow = gxplane + xoff;
                              if (stride == 1) {
                                for (std::int64_t wo = cr.lo; wo < cr.hi; ++wo)
                                  gxrow[wo] += wt * grow[wo];
                              } else {
                                for (std::int64_t wo = cr.lo; wo < cr.hi; ++wo)
                                  gxrow[wo * stride] += wt * grow[wo];
                              }
                            }
                            if (gwbase) {
                              const double* xrow = xplane + xoff;
                              if (stride == 1) {
                                for (std::int64_t wo = cr.lo; wo < cr.hi; ++wo)
                                  gwt += grow[wo] * xrow[wo];
                              } else {
                                for (std::int64_t wo = cr.lo; wo < cr.hi; ++wo)
                                  gwt += grow[wo] * xrow[wo * stride];
                              }
                            }
                          }
                          if (gwbase) gwbase[i * kw + j] += gwt;
                        }
                      }
                    }
                  }
                }
              },
              "conv2d");
}

Var maxpool2d(const Var& x, int k, int stride, int pad) {
  const Tensor& xv = x->val;
  const std::int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const std::int64_t Ho = (H + 2 * pad - k) / stride + 1;
  const std::int64_t Wo = (W + 2 * pad - k) / stride + 1;
  Tensor out(Shape{N, C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(
      static_cast<std::size_t>(N * C * Ho * Wo));
  std::int64_t oi = 0;
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t ho = 0; ho < Ho; ++ho)
        for (std::int64_t wo = 0; wo < Wo; ++wo, ++oi) {
          double best = -1e300;
          std::int64_t best_idx = -1;
          for (std::int64_t i = 0; i < k; ++i) {
            const std::int64_t hi = ho * stride - pad + i;
            if (hi < 0 || hi >= H) continue;
            for (std::int64_t j = 0; j < k; ++j) {
              const std::int64_t wi = wo * stride - pad + j;
              if (wi < 0 || wi >= W) continue;
              const double v = xv.at(n, c, hi, wi);
              if (v > best) {
                best = v;
                best_idx = ((n * C + c) * H + hi) * W + wi;
              }
            }
          }
          out[oi] = best;
          (*argmax)[static_cast<std::size_t>(oi)] = best_idx;
        }
  return make(std::move(out), {x},
              [x, argmax](Node& self) {
                Tensor& gx = x->g();
                for (std::int64_t i = 0; i < self.val.numel(); ++i)
                  gx[(*argmax)[static_cast<std::size_t>(i)]] += self.grad[i];
              },
              "maxpool");
}

Var avgpool2x2(const Var& x) {
  const Tensor& xv = x->val;
  const std::int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  check(H % 2 == 0 && W % 2 == 0, "avgpool2x2: odd spatial dims");
  Tensor out(Shape{N, C, H / 2, W / 2});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t h = 0; h < H / 2; ++h)
        for (std::int64_t w = 0; w < W / 2; ++w)
          out.at(n, c, h, w) = 0.25 * (xv.at(n, c, 2 * h, 2 * w) + xv.at(n, c, 2 * h, 2 * w + 1) +
                                       xv.at(n, c, 2 * h + 1, 2 * w) +
                                       xv.at(n, c, 2 * h + 1, 2 * w + 1));
  return make(std::move(out), {x},
              [x, N, C, H, W](Node& self) {
                Tensor& gx = x->g();
                for (std::int64_t n = 0; n < N; ++n)
                  for (std::int64_t c = 0; c < C; ++c)
                    for (std::int64_t h = 0; h < H / 2; ++h)
                      for (std::int64_t w = 0; w < W / 2; ++w) {
                        const double g = 0.25 * self.grad.at(n, c, h, w);
                        gx.at(n, c, 2 * h, 2 * w) += g;
                        gx.at(n, c, 2 * h, 2 * w + 1) += g;
                        gx.at(n, c, 2 * h + 1, 2 * w) += g;
                        gx.at(n, c, 2 * h + 1, 2 * w + 1) += g;
                      }
              },
              "avgpool2x2");
}

namespace {

struct LinSample {
  std::int64_t i0, i1;
  double w0, w1;
};

// half-pixel centers, clamped to the border
static LinSample lin_sample(std::int64_t out_i, std::int64_t in_n, std::int64_t out_n) {
  const double scale = static_cast<double>(in_n) / static_cast<double>(out_n);
  double src = (static_cast<double>(out_i) + 0.5) * scale - 0.5;
  if (src < 0.0) src = 0.0;
  const double cap = static_cast<double>(in_n - 1);
  if (src > cap) src = cap;
  LinSample s;
  s.i0 = static_cast<std::int64_t>(src);
  s.i1 = std::min(s.i0 + 1, in_n - 1);
  s.w1 = src - static_cast<double>(s.i0);
  s.w0 = 1.0 - s.w1;
  return s;
}

}  // namespace

Var resize_bilinear(const Var& x, std::int64_t out_h, std::int64_t out_w) {
  const Tensor& xv = x->val;
  check(xv.rank() == 4, "resize: NCHW expected");
  const std::int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  if (out_h == H && out_w == W) {
    return make(Tensor(xv), {x},
                [x](Node& self) {
                  Tensor& gx = x->g();
                  for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += self.grad[i];
                },
                "resize_id");
  }
  std::vector<LinSample> hs(static_cast<std::size_t>(out_h)), ws(static_cast<std::size_t>(out_w));
  for (std::int64_t i = 0; i < out_h; ++i) hs[static_cast<std::size_t>(i)] = lin_sample(i, H, out_h);
  for (std::int64_t j = 0; j < out_w; ++j) ws[static_cast<std::size_t>(j)] = lin_sample(j, W, out_w);
  Tensor out(Shape{N, C, out_h, out_w});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c) {
      const double* plane = xv.data() + (n * C + c) * H * W;
      double* o = out.data() + (n * C + c) * out_h * out_w;
      for (std::int64_t i = 0; i < out_h; ++i) {
        const LinSample& sh = hs[static_cast<std::size_t>(i)];
        for (std::int64_t j = 0; j < out_w; ++j) {
          const LinSample& sw = ws[static_cast<std::size_t>(j)];
          o[i * out_w + j] = sh.w0 * (sw.w0 * plane[sh.i0 * W + sw.i0] +
                                      sw.w1 * plane[sh.i0 * W + sw.i1]) +
                             sh.w1 * (sw.w0 * plane[sh.i1 * W + sw.i0] +
                                      sw.w1 * plane[sh.i1 * W + sw.i1]);
        }
      }
    }
  return make(std::move(out), {x},
              [x, N, C, H, W, out_h, out_w, hs, ws](Node& self) {
                Tensor& gx = x->g();
                for (std::int64_t n = 0; n < N; ++n)
                  for (std::int64_t c = 0; c < C; ++c) {
                    double* plane = gx.data() + (n * C + c) * H * W;
                    const double* g = self.grad.data() + (n * C + c) * out_h * out_w;
                    for (std::int64_t i = 0; i < out_h; ++i) {
                      const LinSample& sh = hs[static_cast<std::size_t>(i)];
                      for (std::int64_t j = 0; j < out_w; ++j) {
                        const LinSample& sw = ws[static_cast<std::size_t>(j)];
                        const double gv = g[i * out_w + j];
                        plane[sh.i0 * W + sw.i0] += gv * sh.w0 * sw.w0;
                        plane[sh.i0 * W + sw.i1] += gv * sh.w0 * sw.w1;
                        plane[sh.i1 * W + sw.i0] += gv * sh.w1 * sw.w0;
                        plane[sh.i1 * W + sw.i1] += gv * sh.w1 * sw.w1;
                      }
                    }
                  }
              },
              "resize");
}

Var blur_valid(const Var& x, const Tensor& kernel) {
  const Tensor& xv = x->val;
  check(xv.rank() == 4 && kernel.rank() == 2, "blur_valid: NCHW input, 2-D kernel");
  const std::int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const std::int64_t kh = kernel.dim(0), kw = kernel.dim(1);
  check(kh <= H && kw <= W, "blur_valid: kernel larger than input");
  const std::int64_t Ho = H - kh + 1, Wo = W - kw + 1;
  Tensor out(Shape{N, C, Ho, Wo});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c) {
      const double* plane = xv.data() + (n * C + c) * H * W;
      double* o = out.data() + (n * C + c) * Ho * Wo;
      for (std::int64_t ho = 0; ho < Ho; ++ho)
        for (std::int64_t wo = 0; wo < Wo; ++wo) {
          double s = 0.0;
          for (std::int64_t i = 0; i < kh; ++i) {
            const double* xrow = plane + (ho + i) * W + wo;
            const double* krow = kernel.data() + i * kw;
            for (std::int64_t j = 0; j < kw; ++j) s += xrow[j] * krow[j];
          }
          o[ho * Wo + wo] = s;
        }
    }
  Tensor kcopy = kernel;
  return make(std::move(out), {x},
              [x, kcopy, N, C, H, W, kh, kw, Ho, Wo](Node& self) {
                Tensor& gx = x->g();
                for (std::int64_t n = 0; n < N; ++n)
                  for (std::int64_t c = 0; c < C; ++c) {
                    double* plane = gx.data() + (n * C + c) * H * W;
                    const double* g = self.grad.data() + (n * C + c) * Ho * Wo;
                    for (std::int64_t ho = 0; ho < Ho; ++ho)
                      for (std::int64_t wo = 0; wo < Wo; ++wo) {
                        const double gv = g[ho * Wo + wo];
                        if (gv == 0.0) continue;
                        for (std::int64_t i = 0; i < kh; ++i) {
                          double* xrow = plane + (ho + i) * W + wo;
                          const double* krow = kcopy.data() + i * kw;
                          for (std::int64_t j = 0; j < kw; ++j) xrow[j] += gv * krow[j];
                        }
                      }
                  }
              },
              "blur");
}

Var channel_max_abs(const Var& x) {
  const Tensor& xv = x->val;
  check(xv.rank() == 4, "channel_max_abs: NCHW expected");
  const std::int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  Tensor out(Shape{N, 1, H, W});
  auto argc = std::make_shared<std::vector<std::int32_t>>(static_cast<std::size_t>(N * H * W));
  std::int64_t oi = 0;
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t h = 0; h < H; ++h)
      for (std::int64_t w = 0; w < W; ++w, ++oi) {
        double best = -1.0;
        std::int32_t bc = 0;
        for (std::int64_t c = 0; c < C; ++c) {
          const double v = std::abs(xv.at(n, c, h, w));
          if (v > best) {  // ties keep the first channel
            best = v;
            bc = static_cast<std::int32_t>(c);
          }
        }
        out[oi] = best;
        (*argc)[static_cast<std::size_t>(oi)] = bc;
      }
  return make(std::move(out), {x},
              [x, argc, N, C, H, W](Node& self) {
                Tensor& gx = x->g();
                std::int64_t oi = 0;
                for (std::int64_t n = 0; n < N; ++n)
                  for (std::int64_t h = 0; h < H; ++h)
                    for (std::int64_t w = 0; w < W; ++w, ++oi) {
                      const std::int64_t c = (*argc)[static_cast<std::size_t>(oi)];
                      const double v = x->val.at(n, c, h, w);
                      const double sign = (v >= 0.0) ? 1.0 : -1.0;
                      gx.at(n, c, h, w) += sign * self.grad[oi];
                    }
              },
              "chan_max_abs");
}

Var mse(const Var& a, const Var& b) {
  check(a->val.same_shape(b->val), "mse: shape mismatch " + shape_str(a->val.shape()) +
                                       " vs " + shape_str(b->val.shape()));
  return mean_all(square(sub(a, b)));
}

Var bce_with_logits_mean(const Var& logits, const Var& target) {
  const Tensor& xv = logits->val;
  const Tensor& yv = target->val;
  check(xv.same_shape(yv), "bce: shape mismatch");
  const std::int64_t n = xv.numel();
  double loss = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double x = xv[i], y = yv[i];
    loss += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
  }
  Tensor out = Tensor::scalar(loss / static_cast<double>(n));
  return make(std::move(out), {logits},
              [logits, target, n](Node& self) {
                Tensor& gx = logits->g();
                const double g = self.grad[0] / static_cast<double>(n);
                for (std::int64_t i = 0; i < n; ++i) {
                  const double x = logits->val[i];
                  const double s = (x >= 0.0) ? 1.0 / (1.0 + std::exp(-x))
                                              : std::exp(x) / (1.0 + std::exp(x));
                  gx[i] += g * (s - target->val[i]);
                }
              },
              "bce_logits");
}

}  // namespace cisod::ad
