#include "cisod/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cisod/lgr.hpp"

namespace cisod::net {

namespace ad = cisod::ad;

// ------------------------------------------------------------------
// registry and layers

Var ParamRegistry::add(const std::string& name, Tensor init) {
  for (const auto& [k, v] : items_) check(k != name, "params: duplicate name " + name);
  Var v = ad::leaf(std::move(init), true);
  items_.emplace_back(name, v);
  return v;
}

Var ParamRegistry::find(const std::string& name) const {
  for (const auto& [k, v] : items_)
    if (k == name) return v;
  throw std::runtime_error("params: no parameter named " + name);
}

std::int64_t ParamRegistry::total_elements() const {
  std::int64_t n = 0;
  for (const auto& [k, v] : items_) n += v->val.numel();
  return n;
}

std::vector<std::string> ParamRegistry::keys() const {
  std::vector<std::string> out;
  out.reserve(items_.size());
  for (const auto& [k, v] : items_) out.push_back(k);
  return out;
}

void ParamRegistry::zero_grads() {
  for (auto& [k, v] : items_) v->zero_grad();
}

void ParamRegistry::set_requires_grad(bool rg) {
  for (auto& [k, v] : items_) v->requires_grad = rg;
}

Conv2d::Conv2d(ParamRegistry& reg, const std::string& name, int in_ch, int out_ch, int k,
               int stride_, int pad_, Rng& rng)
    : stride(stride_), pad(pad_) {
  const double stddev = std::sqrt(2.0 / (static_cast<double>(in_ch) * k * k));
  w = reg.add(name + ".w", Tensor::randn(Shape{out_ch, in_ch, k, k}, rng, stddev));
  b = reg.add(name + ".b", Tensor::zeros(Shape{out_ch}));
}

GroupNorm::GroupNorm(ParamRegistry& reg, const std::string& name, int channels_)
    : channels(channels_) {
  groups = 1;
  for (int g = std::min(8, channels); g >= 1; --g)
    if (channels % g == 0) {
      groups = g;
      break;
    }
  gamma = reg.add(name + ".gamma", Tensor::full(Shape{channels}, 1.0));
  beta = reg.add(name + ".beta", Tensor::zeros(Shape{channels}));
}

Var GroupNorm::operator()(const Var& x) const {
  const std::int64_t N = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
  check(C == channels, "group norm: channel mismatch");
  Var grouped = ad::reshape(x, Shape{N, groups, (C / groups) * H * W});
  Var mu = ad::mean_lastdim_keep(grouped);
  Var centered = ad::sub(grouped, mu);
  Var var = ad::mean_lastdim_keep(ad::square(centered));
  Var normed = ad::div(centered, ad::sqrt(ad::affine(var, 1.0, eps)));
  Var back = ad::reshape(normed, Shape{N, C, H, W});
  Var g = ad::reshape(gamma, Shape{1, C, 1, 1});
  Var b = ad::reshape(beta, Shape{1, C, 1, 1});
  return ad::add(ad::mul(back, g), b);
}

ConvBlock::ConvBlock(ParamRegistry& reg, const std::string& name, int in_ch, int out_ch,
                     Rng& rng, int k, int stride, int pad)
    : conv(reg, name + ".conv", in_ch, out_ch, k, stride, pad, rng),
      norm(reg, name + ".norm", out_ch) {}

Linear::Linear(ParamRegistry& reg, const std::string& name, int in_dim, int out_dim, Rng& rng) {
  const double stddev = std::sqrt(1.0 / static_cast<double>(in_dim));
  w = reg.add(name + ".w", Tensor::randn(Shape{in_dim, out_dim}, rng, stddev));
  b = reg.add(name + ".b", Tensor::zeros(Shape{out_dim}));
}

Var Linear::operator()(const Var& x) const {
  Var y = ad::matmul(x, w);
  Shape bs(static_cast<std::size_t>(y->val.rank()), 1);
  bs.back() = b->val.dim(0);
  return ad::add(y, ad::reshape(b, bs));
}

// ------------------------------------------------------------------
// config

std::array<int, 5> NetworkConfig::stage_widths() const {
  if (backbone == BackboneKind::kTiny) return {8, 16, 32, 64, 64};
  return {64, 256, 512, 1024, 2048};
}

void NetworkConfig::validate() const {
  check(head_channels == 32, "net config: head_channels is contract-fixed at 32");
  check(graph_nodes >= 1, "net config: graph_nodes must be >= 1");
  check(graph_node_dim == head_channels,
        "net config: graph_node_dim must equal head_channels for residual reprojection");
  check(relation_channels >= 1, "net config: relation_channels must be >= 1");
}

void to_json(nlohmann::json& j, const NetworkConfig& c) {
  j = nlohmann::json{{"backbone", c.backbone == BackboneKind::kTiny ? "tiny" : "resnet50"},
                     {"head_channels", c.head_channels},
                     {"relation_channels", c.relation_channels},
                     {"graph_nodes", c.graph_nodes},
                     {"graph_node_dim", c.graph_node_dim},
                     {"pretrained_weights", c.pretrained_weights}};
}

void from_json(const nlohmann::json& j, NetworkConfig& c) {
  const std::string bk = j.value("backbone", "tiny");
  check(bk == "tiny" || bk == "resnet50", "net config: unknown backbone '" + bk + "'");
  c.backbone = (bk == "tiny") ? BackboneKind::kTiny : BackboneKind::kResNet50;
  c.head_channels = j.value("head_channels", 32);
  c.relation_channels = j.value("relation_channels", 32);
  c.graph_nodes = j.value("graph_nodes", 16);
  c.graph_node_dim = j.value("graph_node_dim", 32);
  c.pretrained_weights = j.value("pretrained_weights", "");
}

// ------------------------------------------------------------------
// relation head

RelationHead::RelationHead(ParamRegistry& reg, const std::string& name, int in_ch, int proj_dim_,
                           Rng& rng)
    : theta(reg, name + ".theta", in_ch, proj_dim_, 1, 1, 0, rng),
      psi(reg, name + ".psi", in_ch, proj_dim_, 1, 1, 0, rng),
      varphi(reg, name + ".varphi", in_ch, proj_dim_, 1, 1, 0, rng),
      proj_dim(proj_dim_) {}

RelationState RelationHead::operator()(const Var& f) const {
  const std::int64_t B = f->val.dim(0), H = f->val.dim(2), W = f->val.dim(3);
  const std::int64_t hw = H * W;
  Var t = ad::reshape(theta(f), Shape{B, proj_dim, hw});
  Var p = ad::reshape(psi(f), Shape{B, proj_dim, hw});
  // scaled dot product between all position pairs
  Var scores = ad::affine(ad::matmul(ad::transpose_last2(t), p),
                          1.0 / std::sqrt(static_cast<double>(proj_dim)), 0.0);
  RelationState st;
  st.R = ad::softmax_lastdim(scores);
  Var e = ad::transpose_last2(ad::reshape(varphi(f), Shape{B, proj_dim, hw}));
  st.fhat = ad::reshape(ad::transpose_last2(ad::matmul(st.R, e)), Shape{B, proj_dim, H, W});
  return st;
}

// ------------------------------------------------------------------
// backbones

namespace {

struct TinyBackbone {
  std::vector<ConvBlock> stages;

  TinyBackbone() = default;
  TinyBackbone(ParamRegistry& reg, const std::array<int, 5>& widths, Rng& rng) {
    int in_ch = 3;
    for (int i = 0; i < 5; ++i) {
      stages.emplace_back(reg, "backbone.stage" + std::to_string(i + 1), in_ch,
                          widths[static_cast<std::size_t>(i)], rng, 3, 2, 1);
      in_ch = widths[static_cast<std::size_t>(i)];
    }
  }

  std::array<Var, 5> forward(const Var& x) const {
    std::array<Var, 5> out;
    Var cur = x;
    for (int i = 0; i < 5; ++i) {
      cur = stages[static_cast<std::size_t>(i)](cur);
      out[static_cast<std::size_t>(i)] = cur;
    }
    return out;
  }
};

struct Bottleneck {
  Conv2d c1, c2, c3;
  GroupNorm n1, n2, n3;
  bool has_down = false;
  Conv2d down;
  GroupNorm down_n;

  Bottleneck() = default;
  Bottleneck(ParamRegistry& reg, const std::string& name, int in_ch, int width, int out_ch,
             int stride, Rng& rng)
      : c1(reg, name + ".c1", in_ch, width, 1, 1, 0, rng),
        c2(reg, name + ".c2", width, width, 3, stride, 1, rng),
        c3(reg, name + ".c3", width, out_ch, 1, 1, 0, rng),
        n1(reg, name + ".n1", width),
        n2(reg, name + ".n2", width),
        n3(reg, name + ".n3", out_ch) {
    if (in_ch != out_ch || stride != 1) {
      has_down = true;
      down = Conv2d(reg, name + ".down", in_ch, out_ch, 1, stride, 0, rng);
      down_n = GroupNorm(reg, name + ".down_n", out_ch);
    }
  }

  Var operator()(const Var& x) const {
    Var y = ad::relu(n1(c1(x)));
    y = ad::relu(n2(c2(y)));
    y = n3(c3(y));
    Var skip = has_down ? down_n(down(x)) : x;
    return ad::relu(ad::add(y, skip));
  }
};

struct ResNet50Backbone {
  Conv2d stem;
  GroupNorm stem_n;
  std::vector<Bottleneck> l1, l2, l3, l4;

  ResNet50Backbone() = default;
  ResNet50Backbone(ParamRegistry& reg, Rng& rng)
      : stem(reg, "backbone.stem", 3, 64, 7, 2, 3, rng), stem_n(reg, "backbone.stem_n", 64) {
    auto build = [&](std::vector<Bottleneck>& layer, const std::string& name, int blocks,
                     int in_ch, int width, int out_ch, int stride) {
      for (int i = 0; i < blocks; ++i)
        layer.emplace_back(reg, name + "." + std::to_string(i), i == 0 ? in_ch : out_ch, width,
                           out_ch, i == 0 ? stride : 1, rng);
    };
    build(l1, "backbone.layer1", 3, 64, 64, 256, 1);
    build(l2, "backbone.layer2", 4, 256, 128, 512, 2);
    build(l3, "backbone.layer3", 6, 512, 256, 1024, 2);
    build(l4, "backbone.layer4", 3, 1024, 512, 2048, 2);
  }

  std::array<Var, 5> forward(const Var& x) const {
    std::array<Var, 5> out;
    Var f1 = ad::relu(stem_n(stem(x)));
    out[0] = f1;
    Var cur = ad::maxpool2d(f1, 3, 2, 1);
    auto run = [&](const std::vector<Bottleneck>& layer, Var v) {
      for (const auto& b : layer) v = b(v);
      return v;
    };
    cur = run(l1, cur);
    out[1] = cur;
    cur = run(l2, cur);
    out[2] = cur;
    cur = run(l3, cur);
    out[3] = cur;
    cur = run(l4, cur);
    out[4] = cur;
    return out;
  }
};

struct Aggregator {
  Conv2d p3, p4, p5;  // 1x1 projections to the head width
  ConvBlock t1, t2, t3, out;

  Aggregator() = default;
  Aggregator(ParamRegistry& reg, const std::array<int, 5>& widths, int hc, Rng& rng)
      : p3(reg, "agg.p3", widths[2], hc, 1, 1, 0, rng),
        p4(reg, "agg.p4", widths[3], hc, 1, 1, 0, rng),
        p5(reg, "agg.p5", widths[4], hc, 1, 1, 0, rng),
        t1(reg, "agg.t1", hc, hc, rng),
        t2(reg, "agg.t2", hc, hc, rng),
        t3(reg, "agg.t3", hc, hc, rng),
        out(reg, "agg.out", 3 * hc, hc, rng) {}
};

struct ConnModule {
  Conv2d p3, p2, p1;  // 1x1 skip projections
  ConvBlock cb3, cb2, cb1;

  ConnModule() = default;
  ConnModule(ParamRegistry& reg, const std::array<int, 5>& widths, int hc, Rng& rng)
      : p3(reg, "cm.p3", widths[2], hc, 1, 1, 0, rng),
        p2(reg, "cm.p2", widths[1], hc, 1, 1, 0, rng),
        p1(reg, "cm.p1", widths[0], hc, 1, 1, 0, rng),
        cb3(reg, "cm.cb3", hc, hc, rng),
        cb2(reg, "cm.cb2", hc, hc, rng),
        cb1(reg, "cm.cb1", hc, hc, rng) {}
};

}  // namespace

struct SaliencyNet::Impl {
  BackboneKind kind = BackboneKind::kTiny;
  TinyBackbone tiny;
  ResNet50Backbone resnet;
  std::array<Conv2d, 4> adapters;      // levels 2..5
  std::array<RelationHead, 4> relation;  // levels 2..5
  Aggregator agg;
  ConnModule cm;
  lgr::LgrBlock graph;
  Conv2d sal1_head, sal2_head;
};

SaliencyNet::SaliencyNet(const NetworkConfig& cfg, std::uint64_t init_seed)
    : cfg_(cfg), impl_(std::make_unique<Impl>()) {
  cfg_.validate();
  Rng rng(init_seed);
  const auto widths = cfg_.stage_widths();
  const int hc = cfg_.head_channels;
  impl_->kind = cfg_.backbone;
  if (cfg_.backbone == BackboneKind::kTiny) {
    impl_->tiny = TinyBackbone(params_, widths, rng);
  } else {
    impl_->resnet = ResNet50Backbone(params_, rng);
  }
  for (int level = 2; level <= 5; ++level)
    impl_->adapters[static_cast<std::size_t>(level - 2)] =
        Conv2d(params_, "adapt.l" + std::to_string(level), widths[static_cast<std::size_t>(level - 1)],
               hc, 1, 1, 0, rng);
  for (int level = 2; level <= 5; ++level)
    impl_->relation[static_cast<std::size_t>(level - 2)] =
        RelationHead(params_, "relation.l" + std::to_string(level),
                     widths[static_cast<std::size_t>(level - 1)], cfg_.relation_channels, rng);
  impl_->agg = Aggregator(params_, widths, hc, rng);
  impl_->cm = ConnModule(params_, widths, hc, rng);
  impl_->graph = lgr::LgrBlock(params_, "lgr", hc, cfg_.graph_nodes, cfg_.graph_node_dim, rng);
  impl_->sal1_head = Conv2d(params_, "head.sal1", hc, 1, 1, 1, 0, rng);
  impl_->sal2_head = Conv2d(params_, "head.sal2", hc, 1, 1, 1, 0, rng);

  if (!cfg_.pretrained_weights.empty()) load_checkpoint(cfg_.pretrained_weights, *this);
}

SaliencyNet::~SaliencyNet() = default;
SaliencyNet::SaliencyNet(SaliencyNet&&) noexcept = default;
SaliencyNet& SaliencyNet::operator=(SaliencyNet&&) noexcept = default;

void SaliencyNet::copy_params_from(const SaliencyNet& other) {
  const auto& a = params_.items();
  const auto& b = other.params_.items();
  std::vector<std::string> mismatched;
  if (a.size() != b.size())
    mismatched.push_back("param count " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    if (a[i].first != b[i].first || !a[i].second->val.same_shape(b[i].second->val))
      mismatched.push_back(a[i].first + " vs " + b[i].first);
  }
  if (!mismatched.empty()) {
    std::string msg = "copy_params_from: incompatible networks:";
    for (const auto& m : mismatched) msg += " " + m;
    throw std::runtime_error(msg);
  }
  for (std::size_t i = 0; i < a.size(); ++i) a[i].second->val = b[i].second->val;
}

const RelationHead& SaliencyNet::relation_head(int level) const {
  check(level >= 2 && level <= 5, "relation head: level must be in 2..5");
  return impl_->relation[static_cast<std::size_t>(level - 2)];
}

std::array<Var, 5> SaliencyNet::extract_pyramid(const Var& image) const {
  const Tensor& v = image->val;
  check(v.rank() == 4 && v.dim(1) == 3, "extract_pyramid: Nx3xHxW expected");
  check(v.dim(2) == v.dim(3), "extract_pyramid: square input required");
  check(v.dim(2) % 32 == 0, "extract_pyramid: input size must be divisible by 32, got " +
                                std::to_string(v.dim(2)));
  if (impl_->kind == BackboneKind::kTiny) return impl_->tiny.forward(image);
  return impl_->resnet.forward(image);
}

Var SaliencyNet::adapt(const Var& f, int level) const {
  check(level >= 2 && level <= 5, "adapt: level must be in 2..5 (relation learning skips F1)");
  return impl_->adapters[static_cast<std::size_t>(level - 2)](f);
}

Var SaliencyNet::aggregate_location(const Var& f3, const Var& f4, const Var& f5) const {
  const auto& a = impl_->agg;
  const std::int64_t H = f3->val.dim(2), W = f3->val.dim(3);
  Var p3 = a.p3(f3);
  Var p4 = ad::resize_bilinear(a.p4(f4), H, W);
  Var p5 = ad::resize_bilinear(a.p5(f5), H, W);
  check(p4->val.dim(2) == H && p5->val.dim(2) == H,
        "aggregate_location: shape mismatch after upsample");
  Var t1 = a.t1(p5);
  Var t2 = a.t2(ad::mul(p4, p5));
  Var t3 = a.t3(ad::mul(ad::mul(p3, p4), p5));
  return a.out(ad::concat_channels({t1, t2, t3}));
}

Var SaliencyNet::connect_parts(const Var& s_l, const Var& f3, const Var& f2, const Var& f1) const {
  const auto& c = impl_->cm;
  check(s_l->val.dim(2) == f3->val.dim(2), "connect_parts: S_L and F3 stride mismatch");
  // stage F3 at stride 8: position-gate the projected skip, refine
  Var x = c.cb3(ad::mul(ad::clamp01(s_l), c.p3(f3)));
  // stage F2 at stride 4
  Var xu = ad::upsample2(x);
  check(xu->val.dim(2) == f2->val.dim(2), "connect_parts: F2 stride mismatch");
  Var x2 = c.cb2(ad::mul(ad::clamp01(xu), c.p2(f2)));
  // F1 contributes through a gated residual pooled down to stride 4
  Var p1 = ad::avgpool2x2(c.p1(f1));
  return ad::add(x2, c.cb1(ad::mul(ad::clamp01(x2), p1)));
}

Var SaliencyNet::predict_sal1(const Var& s_l, std::int64_t out_h, std::int64_t out_w) const {
  return ad::sigmoid(ad::resize_bilinear(impl_->sal1_head(s_l), out_h, out_w));
}

ForwardOut SaliencyNet::forward(const Var& image, bool with_priors) const {
  ForwardOut o;
  o.pyramid = extract_pyramid(image);
  if (with_priors) {
    for (int level = 2; level <= 5; ++level) {
      const auto i = static_cast<std::size_t>(level - 2);
      o.adapted[i] = adapt(o.pyramid[static_cast<std::size_t>(level - 1)], level);
      o.relation[i] = impl_->relation[i](o.pyramid[static_cast<std::size_t>(level - 1)]);
    }
  }
  o.s_l = aggregate_location(o.pyramid[2], o.pyramid[3], o.pyramid[4]);
  o.s_p = connect_parts(o.s_l, o.pyramid[2], o.pyramid[1], o.pyramid[0]);
  lgr::LgrOut g = impl_->graph(o.s_l, o.s_p);
  o.s_r = g.s_r;
  o.attention = g.attention;
  o.mt_l = g.mt_l;
  o.mt_p = g.mt_p;
  const std::int64_t S = image->val.dim(2);
  o.sal1_logits = ad::resize_bilinear(impl_->sal1_head(o.s_l), S, S);
  o.sal2_logits = ad::resize_bilinear(impl_->sal2_head(o.s_r), S, S);
  o.s_w = ad::sigmoid(o.sal2_logits);
  return o;
}

// ------------------------------------------------------------------
// shape contract / summary

ShapeContract shape_contract(std::int64_t input_size) {
  ShapeContract c;
  c.input = input_size;
  for (int i = 0; i < 5; ++i) c.pyramid_hw[static_cast<std::size_t>(i)] = input_size >> (i + 1);
  c.s_l_hw = input_size / 8;
  c.s_p_hw = input_size / 4;
  c.s_r_hw = input_size / 4;
  return c;
}

std::string summary_table(const NetworkConfig& cfg, std::int64_t input_size) {
  const auto c = shape_contract(input_size);
  const auto w = cfg.stage_widths();
  std::ostringstream os;
  os << "input " << input_size << "x" << input_size << "x3 ("
     << (cfg.backbone == BackboneKind::kTiny ? "tiny" : "resnet50") << " backbone)\n";
  for (int i = 0; i < 5; ++i)
    os << "  F" << (i + 1) << "  " << c.pyramid_hw[static_cast<std::size_t>(i)] << "x"
       << c.pyramid_hw[static_cast<std::size_t>(i)] << "x" << w[static_cast<std::size_t>(i)] << "\n";
  os << "  S_L " << c.s_l_hw << "x" << c.s_l_hw << "x" << c.channels << "\n";
  os << "  S_P " << c.s_p_hw << "x" << c.s_p_hw << "x" << c.channels << "\n";
  os << "  S_R " << c.s_r_hw << "x" << c.s_r_hw << "x" << c.channels << "\n";
  os << "  S_W " << input_size << "x" << input_size << "x1\n";
  return os.str();
}

std::uint64_t params_hash(const ParamRegistry& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, v] : params.items()) {
    h = fnv1a(name, h);
    const auto* bytes = reinterpret_cast<const unsigned char*>(v->val.data());
    for (std::int64_t i = 0; i < v->val.numel() * 8; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

// ------------------------------------------------------------------
// checkpoints

static const char kCkptMagic[8] = {'C', 'S', 'O', 'D', 'C', 'K', 'P', '1'};

void save_checkpoint(const std::string& path, const SaliencyNet& net,
                     const nlohmann::json& meta) {
  nlohmann::json header;
  header["format_version"] = 1;
  header["config"] = net.config();
  header["meta"] = meta;
  nlohmann::json plist = nlohmann::json::array();
  for (const auto& [name, v] : net.params().items()) {
    nlohmann::json p;
    p["name"] = name;
    p["shape"] = v->val.shape();
    plist.push_back(p);
  }
  header["params"] = plist;
  const std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary);
  check(static_cast<bool>(f), "checkpoint: cannot open for writing " + path);
  f.write(kCkptMagic, 8);
  const std::uint64_t len = hs.size();
  f.write(reinterpret_cast<const char*>(&len), 8);
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, v] : net.params().items())
    f.write(reinterpret_cast<const char*>(v->val.data()),
            static_cast<std::streamsize>(v->val.numel() * 8));
  check(static_cast<bool>(f), "checkpoint: write failed " + path);
}

nlohmann::json peek_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(static_cast<bool>(f), "checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  check(f.gcount() == 8 && std::memcmp(magic, kCkptMagic, 8) == 0,
        "checkpoint: bad magic in " + path);
  std::uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), 8);
  std::string hs(len, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(len));
  check(static_cast<bool>(f), "checkpoint: truncated header in " + path);
  return nlohmann::json::parse(hs);
}

nlohmann::json load_checkpoint(const std::string& path, SaliencyNet& net) {
  std::ifstream f(path, std::ios::binary);
  check(static_cast<bool>(f), "checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  check(f.gcount() == 8 && std::memcmp(magic, kCkptMagic, 8) == 0,
        "checkpoint: bad magic in " + path);
  std::uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), 8);
  std::string hs(len, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(len));
  check(static_cast<bool>(f), "checkpoint: truncated header in " + path);
  nlohmann::json header = nlohmann::json::parse(hs);
  check(header.value("format_version", 0) == 1, "checkpoint: unsupported version in " + path);

  const auto& items = net.params().items();
  const auto& plist = header.at("params");
  std::vector<std::string> mismatched;
  if (plist.size() != items.size())
    mismatched.push_back("param count " + std::to_string(plist.size()) + " in file vs " +
                         std::to_string(items.size()) + " in network");
  for (std::size_t i = 0; i < std::min(plist.size(), items.size()); ++i) {
    const std::string name = plist[i].at("name").get<std::string>();
    const Shape shape = plist[i].at("shape").get<Shape>();
    if (name != items[i].first || shape != items[i].second->val.shape())
      mismatched.push_back(name + shape_str(shape) + " vs " + items[i].first +
                           shape_str(items[i].second->val.shape()));
  }
  if (!mismatched.empty()) {
    std::string msg = "checkpoint: incompatible with network:";
    for (const auto& m : mismatched) msg += "\n  " + m;
    throw std::runtime_error(msg);
  }
  for (const auto& [name, v] : items) {
    f.read(reinterpret_cast<char*>(v->val.data()),
           static_cast<std::streamsize>(v->val.numel() * 8));
  }
  check(static_cast<bool>(f), "checkpoint: truncated payload in " + path);
  return header.value("meta", nlohmann::json::object());
}

}  // namespace cisod::net
