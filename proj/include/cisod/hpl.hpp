#ifndef CISOD_HPL_HPP_
#define CISOD_HPL_HPP_

#include <array>
#include <optional>
#include <string_view>

#include "cisod/dataset.hpp"
#include "cisod/net.hpp"

namespace cisod::hpl {

using ad::Var;

struct HPLWeights {
  double alpha = 0.5;
  double beta = 0.5;
  double sml_probability = 0.10;
  void validate() const;
};

// smoothing constant of the IoU term in the saliency loss
inline constexpr double kIouEps = 1.0;

// 1 - mean(SSIM map), Gaussian window 11x11 (sigma 1.5); the window shrinks
// to the map size on small inputs. The dynamic range is estimated from the
// inputs when not supplied and is treated as a constant w.r.t. gradients.
Var ssim_loss(const Var& x, const Var& y, std::optional<double> data_range = std::nullopt);

// sum over backbone levels 2..5 of the SSIM loss between adapted features;
// the prior side is detached so gradients only reach the target network
Var short_range_loss(const net::ForwardOut& target, const net::ForwardOut& prior);

// pairwise position relations for one feature map (delegates to the head
// owned by the network)
net::RelationState relation_state(const Var& f, const net::RelationHead& head);

// sum over levels 2..5 of MSE(R_t, R_p) + MSE(Fhat_t, Fhat_p); prior detached
Var long_range_loss(const net::ForwardOut& target, const net::ForwardOut& prior);

Var rpl_loss(const net::ForwardOut& target, const net::ForwardOut& prior);

// masked location response distillation: per-site channel-max of |S_L|,
// multiplied by the foreground mask, MSE between the two; prior detached
Var lpl_loss(const Var& s_l_target, const Var& s_l_prior, const Var& foreground);

// ground truth area-downsampled to the location-map resolution, kept soft
Tensor foreground_mask(const Tensor& gt_n1hw, std::int64_t out_h, std::int64_t out_w);

// BCE-with-logits + soft IoU
Var saliency_loss(const Var& logits, const Var& gt);

// Reproducible per-(seed, id, step) masking decision.
bool sml_decision(std::uint64_t seed, std::string_view sample_id, std::int64_t step, double p);

// fills pixels where gt > 0.5 with the given color (CHW [0,255] image space)
Tensor self_mask_apply(const Tensor& compressed_chw, const Tensor& gt_1hw,
                       const std::array<double, 3>& fill);

// applies the mask with probability p; the untaken path returns the input
// unchanged (bit-identical)
Tensor self_mask(const dataset::CompressedSample& sample, double p,
                 const std::array<double, 3>& fill, std::uint64_t seed, std::int64_t step);

}  // namespace cisod::hpl

#endif  // CISOD_HPL_HPP_
