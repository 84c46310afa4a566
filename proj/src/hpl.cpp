#include "cisod/hpl.hpp"

#include <algorithm>
#include <cmath>

#include "cisod/image.hpp"

namespace cisod::hpl {

namespace ad = cisod::ad;

void HPLWeights::validate() const {
  check(alpha >= 0.0 && beta >= 0.0, "hpl weights: alpha/beta must be >= 0");
  check(sml_probability >= 0.0 && sml_probability <= 1.0,
        "hpl weights: sml_probability must be in [0,1]");
}

namespace {

Tensor gaussian_kernel(int k, double sigma) {
  Tensor w(Shape{k, k});
  const double c = (k - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double d2 = (i - c) * (i - c) + (j - c) * (j - c);
      const double v = std::exp(-d2 / (2.0 * sigma * sigma));
      w.at(i, j) = v;
      sum += v;
    }
  w.scale_(1.0 / sum);
  return w;
}

}  // namespace

Var ssim_loss(const Var& x, const Var& y, std::optional<double> data_range) {
  check(x->val.same_shape(y->val), "ssim_loss: shape mismatch " + shape_str(x->val.shape()) +
                                       " vs " + shape_str(y->val.shape()));
  check(x->val.rank() == 4, "ssim_loss: NCHW expected");
  const std::int64_t H = x->val.dim(2), W = x->val.dim(3);
  const int k = static_cast<int>(std::min<std::int64_t>({11, H, W}));
  const Tensor win = gaussian_kernel(k, 1.5);

  double range;
  if (data_range) {
    range = *data_range;
  } else {
    range = std::max(x->val.max(), y->val.max()) - std::min(x->val.min(), y->val.min());
  }
  range = std::max(range, 1e-6);
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);

  Var mu_x = ad::blur_valid(x, win);
  Var mu_y = ad::blur_valid(y, win);
  Var mu_xx = ad::mul(mu_x, mu_x);
  Var mu_yy = ad::mul(mu_y, mu_y);
  Var mu_xy = ad::mul(mu_x, mu_y);
  Var sxx = ad::sub(ad::blur_valid(ad::mul(x, x), win), mu_xx);
  Var syy = ad::sub(ad::blur_valid(ad::mul(y, y), win), mu_yy);
  Var sxy = ad::sub(ad::blur_valid(ad::mul(x, y), win), mu_xy);

  Var num = ad::mul(ad::affine(mu_xy, 2.0, c1), ad::affine(sxy, 2.0, c2));
  Var den = ad::mul(ad::affine(ad::add(mu_xx, mu_yy), 1.0, c1), ad::affine(ad::add(sxx, syy), 1.0, c2));
  Var ssim_map = ad::div(num, den);
  return ad::affine(ad::mean_all(ssim_map), -1.0, 1.0);
}

Var short_range_loss(const net::ForwardOut& target, const net::ForwardOut& prior) {
  Var total;
  for (int i = 0; i < 4; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    check(target.adapted[idx] != nullptr && prior.adapted[idx] != nullptr,
          "short_range_loss: forward pass was run without prior features");
    Var term = ssim_loss(target.adapted[idx], ad::detach(prior.adapted[idx]));
    total = total ? ad::add(total, term) : term;
  }
  return total;
}

net::RelationState relation_state(const Var& f, const net::RelationHead& head) {
  return head(f);
}

Var long_range_loss(const net::ForwardOut& target, const net::ForwardOut& prior) {
  Var total;
  for (int i = 0; i < 4; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    check(target.relation[idx].R != nullptr && prior.relation[idx].R != nullptr,
          "long_range_loss: forward pass was run without relation states");
    Var term = ad::add(ad::mse(target.relation[idx].R, ad::detach(prior.relation[idx].R)),
                       ad::mse(target.relation[idx].fhat, ad::detach(prior.relation[idx].fhat)));
    total = total ? ad::add(total, term) : term;
  }
  return total;
}

Var rpl_loss(const net::ForwardOut& target, const net::ForwardOut& prior) {
  return ad::add(short_range_loss(target, prior), long_range_loss(target, prior));
}

Var lpl_loss(const Var& s_l_target, const Var& s_l_prior, const Var& foreground) {
  check(s_l_target->val.same_shape(s_l_prior->val), "lpl_loss: S_L shape mismatch");
  Var resp_t = ad::channel_max_abs(s_l_target);
  Var resp_p = ad::channel_max_abs(ad::detach(s_l_prior));
  check(foreground->val.dim(foreground->val.rank() - 1) == resp_t->val.dim(3) &&
            foreground->val.dim(foreground->val.rank() - 2) == resp_t->val.dim(2),
        "lpl_loss: foreground mask resolution mismatch");
  return ad::mse(ad::mul(resp_t, foreground), ad::mul(resp_p, foreground));
}

Tensor foreground_mask(const Tensor& gt_n1hw, std::int64_t out_h, std::int64_t out_w) {
  check(gt_n1hw.rank() == 4 && gt_n1hw.dim(1) == 1, "foreground_mask: Nx1xHxW expected");
  const std::int64_t N = gt_n1hw.dim(0);
  Tensor out(Shape{N, 1, out_h, out_w});
  const std::int64_t in_plane = gt_n1hw.dim(2) * gt_n1hw.dim(3);
  const std::int64_t out_plane = out_h * out_w;
  for (std::int64_t n = 0; n < N; ++n) {
    Tensor plane(Shape{1, gt_n1hw.dim(2), gt_n1hw.dim(3)});
    std::copy(gt_n1hw.data() + n * in_plane, gt_n1hw.data() + (n + 1) * in_plane, plane.data());
    Tensor small = resize_chw_area(plane, out_h, out_w);
    std::copy(small.data(), small.data() + out_plane, out.data() + n * out_plane);
  }
  return out;
}

Var saliency_loss(const Var& logits, const Var& gt) {
  check(logits->val.same_shape(gt->val), "saliency_loss: shape mismatch");
  Var bce = ad::bce_with_logits_mean(logits, gt);
  Var pred = ad::sigmoid(logits);
  Var inter = ad::sum_all(ad::mul(pred, gt));
  Var uni = ad::sub(ad::add(ad::sum_all(pred), ad::sum_all(gt)), inter);
  Var iou = ad::div(ad::affine(inter, 1.0, kIouEps), ad::affine(uni, 1.0, kIouEps));
  return ad::add(bce, ad::affine(iou, -1.0, 1.0));
}

bool sml_decision(std::uint64_t seed, std::string_view sample_id, std::int64_t step, double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  std::uint64_t h = fnv1a(sample_id, 0xcbf29ce484222325ULL ^ seed);
  h = mix_seed(h, static_cast<std::uint64_t>(step));
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return u < p;
}

Tensor self_mask_apply(const Tensor& compressed_chw, const Tensor& gt_1hw,
                       const std::array<double, 3>& fill) {
  check(compressed_chw.rank() == 3 && compressed_chw.dim(0) == 3,
        "self_mask: 3xHxW image expected");
  check(gt_1hw.dim(1) == compressed_chw.dim(1) && gt_1hw.dim(2) == compressed_chw.dim(2),
        "self_mask: gt resolution mismatch");
  Tensor out = compressed_chw;
  const std::int64_t plane = compressed_chw.dim(1) * compressed_chw.dim(2);
  for (std::int64_t i = 0; i < plane; ++i) {
    if (gt_1hw[i] > 0.5) {
      out[i] = fill[0];
      out[plane + i] = fill[1];
      out[2 * plane + i] = fill[2];
    }
  }
  return out;
}

Tensor self_mask(const dataset::CompressedSample& sample, double p,
                 const std::array<double, 3>& fill, std::uint64_t seed, std::int64_t step) {
  if (!sml_decision(seed, sample.id, step, p)) return sample.compressed;
  return self_mask_apply(sample.compressed, sample.gt, fill);
}

}  // namespace cisod::hpl
