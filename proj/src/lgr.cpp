#include "cisod/lgr.hpp"

namespace cisod::lgr {

namespace ad = cisod::ad;

GraphProjector::GraphProjector(net::ParamRegistry& reg, const std::string& name, int in_ch,
                               int n_nodes_, int node_dim_, Rng& rng)
    : assign(reg, name + ".assign", in_ch, n_nodes_, 1, 1, 0, rng),
      embed(reg, name + ".embed", in_ch, node_dim_, 1, 1, 0, rng),
      n_nodes(n_nodes_),
      node_dim(node_dim_) {
  check(n_nodes_ >= 1, "graph projector: n_nodes must be >= 1");
}

std::pair<Var, Var> GraphProjector::operator()(const Var& s) const {
  const std::int64_t B = s->val.dim(0);
  const std::int64_t hw = s->val.dim(2) * s->val.dim(3);
  Var logits = ad::reshape(assign(s), Shape{B, n_nodes, hw});
  Var mt = ad::softmax_lastdim(logits);  // each node: distribution over sites
  Var x = ad::transpose_last2(ad::reshape(embed(s), Shape{B, node_dim, hw}));
  Var v = ad::matmul(mt, x);  // B x N x D
  return {v, mt};
}

CrossGraphAttention::CrossGraphAttention(net::ParamRegistry& reg, const std::string& name,
                                         int dim, Rng& rng)
    : rho(reg, name + ".rho", dim, dim, rng),
      omega(reg, name + ".omega", dim, dim, rng),
      eta(reg, name + ".eta", dim, dim, rng) {}

Var CrossGraphAttention::operator()(const Var& v_p, const Var& v_l, Var* attention_out) const {
  Var scores = ad::matmul(rho(v_p), ad::transpose_last2(omega(v_l)));
  Var att = ad::softmax_lastdim(scores);
  if (attention_out) *attention_out = att;
  return ad::add(ad::matmul(att, eta(v_l)), v_p);
}

GraphConvLayer::GraphConvLayer(net::ParamRegistry& reg, const std::string& name, int n_nodes,
                               int dim, Rng& rng) {
  // near pass-through at init
  Tensor a(Shape{n_nodes, n_nodes});
  for (int i = 0; i < n_nodes; ++i)
    for (int j = 0; j < n_nodes; ++j)
      a.at(i, j) = (i == j ? 1.0 : 0.0) + rng.normal(0.0, 0.01);
  adjacency = reg.add(name + ".adjacency", std::move(a));
  lin = net::Linear(reg, name + ".lin", dim, dim, rng);
}

Var GraphConvLayer::normalized_adjacency() const {
  const std::int64_t n = adjacency->val.dim(0);
  Var row_l1 = ad::affine(ad::mean_lastdim_keep(ad::abs(adjacency)), static_cast<double>(n), 1e-12);
  return ad::div(adjacency, row_l1);
}

Var GraphConvLayer::operator()(const Var& v) const {
  // (A v_b) computed as (v_b^T A^T)^T to reuse the batched-by-2d matmul
  Var at = ad::transpose_last2(normalized_adjacency());
  Var mixed = ad::transpose_last2(ad::matmul(ad::transpose_last2(v), at));
  return ad::relu(lin(mixed));
}

LgrBlock::LgrBlock(net::ParamRegistry& reg, const std::string& name, int channels, int n_nodes,
                   int node_dim, Rng& rng)
    : project_location(reg, name + ".proj_l", channels, n_nodes, node_dim, rng),
      project_parts(reg, name + ".proj_p", channels, n_nodes, node_dim, rng),
      attention(reg, name + ".cga", node_dim, rng),
      gconv1(reg, name + ".gconv1", n_nodes, node_dim, rng),
      gconv2(reg, name + ".gconv2", n_nodes, node_dim, rng),
      fuse(reg, name + ".fuse", channels, channels, rng) {}

Var reproject_fuse(const LgrBlock& block, const Var& v_r, const Var& mt_p, const Var& mt_l,
                   const Var& s_p, const Var& s_l) {
  auto back_to_map = [&](const Var& mt, const Var& base) {
    const std::int64_t B = base->val.dim(0);
    const std::int64_t C = base->val.dim(1);
    const std::int64_t H = base->val.dim(2);
    const std::int64_t W = base->val.dim(3);
    Var flat = ad::matmul(ad::transpose_last2(mt), v_r);  // B x HW x D
    Var chw = ad::reshape(ad::transpose_last2(flat), Shape{B, C, H, W});
    return ad::add(chw, base);
  };
  Var f_p = back_to_map(mt_p, s_p);
  Var f_l = back_to_map(mt_l, s_l);
  check(s_p->val.dim(2) == 2 * s_l->val.dim(2) && s_p->val.dim(3) == 2 * s_l->val.dim(3),
        "lgr: location/part stride mismatch");
  return block.fuse(ad::add(f_p, ad::upsample2(f_l)));
}

LgrOut LgrBlock::operator()(const Var& s_l, const Var& s_p) const {
  LgrOut out;
  auto [v_l, mt_l] = project_location(s_l);
  auto [v_p, mt_p] = project_parts(s_p);
  out.v_l = v_l;
  out.v_p = v_p;
  out.mt_l = mt_l;
  out.mt_p = mt_p;
  out.v_hat_p = attention(v_p, v_l, &out.attention);
  out.v_r = gconv2(gconv1(out.v_hat_p));
  out.s_r = reproject_fuse(*this, out.v_r, mt_p, mt_l, s_p, s_l);
  return out;
}

}  // namespace cisod::lgr
