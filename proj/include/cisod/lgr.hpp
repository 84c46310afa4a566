#ifndef CISOD_LGR_HPP_
#define CISOD_LGR_HPP_

#include <string>
#include <utility>

#include "cisod/net.hpp"

namespace cisod::lgr {

using ad::Var;

// Graph projection: a learned assignment turns a 32-channel map into n_nodes
// node vectors; each node is a softmax distribution over spatial sites.
struct GraphProjector {
  net::Conv2d assign;  // C -> n_nodes, 1x1
  net::Conv2d embed;   // C -> node_dim, 1x1
  int n_nodes = 0, node_dim = 0;

  GraphProjector() = default;
  GraphProjector(net::ParamRegistry& reg, const std::string& name, int in_ch, int n_nodes,
                 int node_dim, Rng& rng);
  // returns {V: B x N x D, Mt: B x N x HW}
  std::pair<Var, Var> operator()(const Var& s) const;
};

// softmax(rho(Vp) omega(Vl)^T) eta(Vl) + Vp; rows of the attention matrix sum
// to one
struct CrossGraphAttention {
  net::Linear rho, omega, eta;

  CrossGraphAttention() = default;
  CrossGraphAttention(net::ParamRegistry& reg, const std::string& name, int dim, Rng& rng);
  Var operator()(const Var& v_p, const Var& v_l, Var* attention_out = nullptr) const;
};

// adjacency-normalized node mixing + linear + relu; the adjacency is learned,
// initialized near identity, and L1 row-normalized so an exact identity
// adjacency passes nodes through untouched
struct GraphConvLayer {
  Var adjacency;  // N x N
  net::Linear lin;

  GraphConvLayer() = default;
  GraphConvLayer(net::ParamRegistry& reg, const std::string& name, int n_nodes, int dim,
                 Rng& rng);
  Var normalized_adjacency() const;
  Var operator()(const Var& v) const;
};

struct LgrOut {
  Var s_r;        // B x 32 x H/4 x W/4
  Var attention;  // B x Np x Nl
  Var v_l, v_p, v_hat_p, v_r;
  Var mt_l, mt_p;  // B x N x HW assignment rows
};

struct LgrBlock {
  GraphProjector project_location, project_parts;
  CrossGraphAttention attention;
  GraphConvLayer gconv1, gconv2;
  net::ConvBlock fuse;  // after F_P + U(F_L)

  LgrBlock() = default;
  LgrBlock(net::ParamRegistry& reg, const std::string& name, int channels, int n_nodes,
           int node_dim, Rng& rng);

  // s_l at stride 8, s_p at stride 4, both 32-channel
  LgrOut operator()(const Var& s_l, const Var& s_p) const;
};

// node reprojection with residual map addition, upsample of the location
// branch, sum and fuse
Var reproject_fuse(const LgrBlock& block, const Var& v_r, const Var& mt_p, const Var& mt_l,
                   const Var& s_p, const Var& s_l);

}  // namespace cisod::lgr

#endif  // CISOD_LGR_HPP_
