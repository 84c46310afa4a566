#ifndef CISOD_NET_HPP_
#define CISOD_NET_HPP_

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cisod/autodiff.hpp"
#include "cisod/rng.hpp"
#include "cisod/tensor.hpp"

namespace cisod::net {

using ad::Var;

// Named parameter store; iteration order is construction order and identical
// for any two networks built from the same config, which is what checkpoint
// compatibility and the prior/target identity tests rely on.
class ParamRegistry {
 public:
  Var add(const std::string& name, Tensor init);
  Var find(const std::string& name) const;  // throws when absent
  const std::vector<std::pair<std::string, Var>>& items() const { return items_; }
  std::int64_t total_elements() const;
  std::vector<std::string> keys() const;
  void zero_grads();
  void set_requires_grad(bool rg);

 private:
  std::vector<std::pair<std::string, Var>> items_;
};

struct Conv2d {
  Var w, b;
  int stride = 1, pad = 0;
  Conv2d() = default;
  Conv2d(ParamRegistry& reg, const std::string& name, int in_ch, int out_ch, int k, int stride,
         int pad, Rng& rng);
  Var operator()(const Var& x) const { return ad::conv2d(x, w, b, stride, pad); }
};

struct GroupNorm {
  Var gamma, beta;
  int channels = 0, groups = 1;
  double eps = 1e-5;
  GroupNorm() = default;
  GroupNorm(ParamRegistry& reg, const std::string& name, int channels);
  Var operator()(const Var& x) const;
};

// 3x3 conv + group norm + relu unless stated otherwise
struct ConvBlock {
  Conv2d conv;
  GroupNorm norm;
  ConvBlock() = default;
  ConvBlock(ParamRegistry& reg, const std::string& name, int in_ch, int out_ch, Rng& rng,
            int k = 3, int stride = 1, int pad = 1);
  Var operator()(const Var& x) const { return ad::relu(norm(conv(x))); }
};

struct Linear {
  Var w, b;  // w: [in, out]
  Linear() = default;
  Linear(ParamRegistry& reg, const std::string& name, int in_dim, int out_dim, Rng& rng);
  Var operator()(const Var& x) const;  // x: (B, N, in)
};

enum class BackboneKind { kTiny, kResNet50 };

struct NetworkConfig {
  BackboneKind backbone = BackboneKind::kTiny;
  int head_channels = 32;     // contract-fixed
  int relation_channels = 32; // projection width of the relation heads
  int graph_nodes = 16;
  int graph_node_dim = 32;
  std::string pretrained_weights;  // optional checkpoint to load after construction

  std::array<int, 5> stage_widths() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const NetworkConfig& c);
void from_json(const nlohmann::json& j, NetworkConfig& c);

// per-level pairwise position relations: R row-stochastic over positions,
// fhat the relation-weighted embedding mapped back to the grid
struct RelationState {
  Var R;     // B x HW x HW
  Var fhat;  // B x C x H x W
};

struct RelationHead {
  Conv2d theta, psi, varphi;
  int proj_dim = 32;
  RelationHead() = default;
  RelationHead(ParamRegistry& reg, const std::string& name, int in_ch, int proj_dim, Rng& rng);
  RelationState operator()(const Var& f) const;
};

struct ForwardOut {
  std::array<Var, 5> pyramid;         // F1..F5, strides 2..32
  std::array<Var, 4> adapted;         // levels 2..5 projected to head width
  std::array<RelationState, 4> relation;  // levels 2..5; empty unless requested
  Var s_l;           // N x 32 x H/8 x W/8
  Var s_p;           // N x 32 x H/4 x W/4
  Var s_r;           // N x 32 x H/4 x W/4
  Var attention;     // cross-graph attention rows (B x Np x Nl)
  Var mt_l, mt_p;    // graph assignment rows (B x nodes x HW), for debug dumps
  Var sal1_logits;   // N x 1 x H x W
  Var sal2_logits;   // N x 1 x H x W
  Var s_w;           // sigmoid(sal2_logits)
};

class LgrBlockImpl;  // defined in lgr.hpp; owned by the network

class SaliencyNet {
 public:
  SaliencyNet(const NetworkConfig& cfg, std::uint64_t init_seed);
  ~SaliencyNet();
  SaliencyNet(SaliencyNet&&) noexcept;
  SaliencyNet& operator=(SaliencyNet&&) noexcept;

  const NetworkConfig& config() const { return cfg_; }
  ParamRegistry& params() { return params_; }
  const ParamRegistry& params() const { return params_; }

  void freeze() { params_.set_requires_grad(false); }
  void unfreeze() { params_.set_requires_grad(true); }
  // copies values; throws listing mismatched keys/shapes
  void copy_params_from(const SaliencyNet& other);

  // input: normalized N x 3 x S x S, S divisible by 32
  std::array<Var, 5> extract_pyramid(const Var& image) const;
  // level in 2..5; level 1 is rejected (relation learning uses 2..5 only)
  Var adapt(const Var& f, int level) const;
  Var aggregate_location(const Var& f3, const Var& f4, const Var& f5) const;
  Var connect_parts(const Var& s_l, const Var& f3, const Var& f2, const Var& f1) const;
  // probability map at (out_h, out_w)
  Var predict_sal1(const Var& s_l, std::int64_t out_h, std::int64_t out_w) const;

  ForwardOut forward(const Var& image, bool with_priors) const;

  const RelationHead& relation_head(int level) const;  // level in 2..5

 private:
  struct Impl;
  NetworkConfig cfg_;
  ParamRegistry params_;
  std::unique_ptr<Impl> impl_;
};

// expected head shapes for a given square input
struct ShapeContract {
  std::int64_t input = 0;
  std::array<std::int64_t, 5> pyramid_hw;
  std::int64_t s_l_hw = 0, s_p_hw = 0, s_r_hw = 0;
  int channels = 32;
};
ShapeContract shape_contract(std::int64_t input_size);
std::string summary_table(const NetworkConfig& cfg, std::int64_t input_size);

// versioned checkpoint: json snapshot (config + metadata) followed by raw
// parameter payloads; loading verifies name/shape agreement and reports every
// mismatched key
void save_checkpoint(const std::string& path, const SaliencyNet& net,
                     const nlohmann::json& meta);
nlohmann::json load_checkpoint(const std::string& path, SaliencyNet& net);
nlohmann::json peek_checkpoint(const std::string& path);  // header only

// byte-level digest of every parameter value, in registry order
std::uint64_t params_hash(const ParamRegistry& params);

}  // namespace cisod::net

#endif  // CISOD_NET_HPP_
