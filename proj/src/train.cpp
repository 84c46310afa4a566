#include "cisod/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>

#include "cisod/metrics.hpp"

namespace fs = std::filesystem;

namespace cisod::train {

namespace ad = cisod::ad;
using ad::Var;

void TrainConfig::validate() const {
  check(phase == "prior" || phase == "target", "train config: phase must be prior|target");
  check(epochs > 0 && batch_size > 0, "train config: epochs/batch_size must be positive");
  check(max_lr > 0.0, "train config: max_lr must be positive");
  check(lr_schedule == "linear-decay", "train config: only linear-decay is implemented");
  check(image_size >= 32 && image_size % 32 == 0,
        "train config: image_size must be a positive multiple of 32");
  check(validation_fraction >= 0.0 && validation_fraction < 1.0,
        "train config: validation_fraction in [0,1)");
  if (phase == "target")
    check(!prior_checkpoint.empty(), "train config: target phase requires prior_checkpoint");
  weights.validate();
  network.validate();
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream f(path);
  check(static_cast<bool>(f), "train config: cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(f);
  TrainConfig c;
  c.phase = j.value("phase", c.phase);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_lr = j.value("max_lr", c.max_lr);
  c.lr_schedule = j.value("lr_schedule", c.lr_schedule);
  c.image_size = j.value("image_size", c.image_size);
  c.weights.alpha = j.value("alpha", c.weights.alpha);
  c.weights.beta = j.value("beta", c.weights.beta);
  c.weights.sml_probability = j.value("sml_probability", c.weights.sml_probability);
  c.seed = j.value("seed", c.seed);
  if (j.contains("network")) c.network = j.at("network").get<net::NetworkConfig>();
  if (j.contains("normalize")) {
    c.normalize.mean = j.at("normalize").at("mean").get<std::array<double, 3>>();
    c.normalize.stddev = j.at("normalize").at("stddev").get<std::array<double, 3>>();
  }
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.grad_clip_norm = j.value("grad_clip_norm", c.grad_clip_norm);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.train_manifest = j.value("train_manifest", c.train_manifest);
  c.prior_checkpoint = j.value("prior_checkpoint", c.prior_checkpoint);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.validate();
  return c;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["phase"] = c.phase;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["max_lr"] = c.max_lr;
  j["lr_schedule"] = c.lr_schedule;
  j["image_size"] = c.image_size;
  j["alpha"] = c.weights.alpha;
  j["beta"] = c.weights.beta;
  j["sml_probability"] = c.weights.sml_probability;
  j["seed"] = c.seed;
  j["network"] = c.network;
  j["normalize"] = {{"mean", c.normalize.mean}, {"stddev", c.normalize.stddev}};
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  j["weight_decay"] = c.weight_decay;
  j["grad_clip_norm"] = c.grad_clip_norm;
  j["validation_fraction"] = c.validation_fraction;
  j["max_steps"] = c.max_steps;
  j["train_manifest"] = c.train_manifest;
  j["prior_checkpoint"] = c.prior_checkpoint;
  j["out_dir"] = c.out_dir;
  return j;
}

double lr_at(std::int64_t step, std::int64_t total_steps, double max_lr) {
  check(total_steps > 0, "lr_at: total_steps must be positive");
  return max_lr * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
}

void Adam::step(net::ParamRegistry& params, double lr) {
  const auto& items = params.items();
  if (m_.empty()) {
    for (const auto& [name, v] : items) {
      m_.emplace_back(Tensor::zeros(v->val.shape()));
      v_.emplace_back(Tensor::zeros(v->val.shape()));
    }
  }
  check(m_.size() == items.size(), "adam: parameter set changed under the optimizer");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto& p = items[i].second;
    if (!p->grad_ready) continue;
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::int64_t k = 0; k < p->val.numel(); ++k) {
      double g = p->grad[k];
      if (weight_decay_ != 0.0) g += weight_decay_ * p->val[k];
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g;
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g * g;
      const double mh = m[k] / bc1;
      const double vh = v[k] / bc2;
      p->val[k] -= lr * mh / (std::sqrt(vh) + eps_);
    }
  }
}

double eval_mae(const net::SaliencyNet& net, const std::vector<dataset::CompressedSample>& samples,
                const dataset::NormalizeConfig& norm, bool use_compressed) {
  check(!samples.empty(), "eval_mae: no samples");
  double acc = 0.0;
  for (const auto& s : samples) {
    const Tensor& img = use_compressed ? s.compressed : s.clean;
    Var input = ad::constant(
        dataset::normalize_chw(img, norm).reshaped(Shape{1, 3, img.dim(1), img.dim(2)}));
    net::ForwardOut out = net.forward(input, /*with_priors=*/false);
    acc += metrics::mae(out.s_w->val.reshaped(s.gt.shape()), s.gt);
  }
  return acc / static_cast<double>(samples.size());
}

namespace {

struct Loaded {
  std::vector<dataset::CompressedSample> train;
  std::vector<dataset::CompressedSample> val;
};

Loaded load_split(const TrainConfig& cfg, const dataset::BenchmarkManifest& manifest) {
  check(!manifest.entries.empty(), "train: manifest has no entries");
  std::vector<dataset::CompressedSample> all;
  all.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) all.push_back(dataset::load_entry(e, cfg.image_size));
  // seeded validation split
  std::vector<std::size_t> idx(all.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(mix_seed(cfg.seed, 0x5eed511));
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  const std::size_t n_val = static_cast<std::size_t>(
      std::floor(cfg.validation_fraction * static_cast<double>(all.size())));
  Loaded out;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (i < n_val)
      out.val.push_back(all[idx[i]]);
    else
      out.train.push_back(all[idx[i]]);
  }
  if (out.train.empty()) {
    out.train = std::move(out.val);
    out.val.clear();
  }
  return out;
}

Var batch_input(const std::vector<const dataset::CompressedSample*>& batch,
                const dataset::NormalizeConfig& norm, bool compressed,
                const std::vector<Tensor>* masked) {
  std::vector<Tensor> chw;
  chw.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Tensor& raw = masked ? (*masked)[i] : (compressed ? batch[i]->compressed : batch[i]->clean);
    chw.push_back(dataset::normalize_chw(raw, norm));
  }
  return ad::constant(dataset::stack_batch(chw));
}

Var batch_gt(const std::vector<const dataset::CompressedSample*>& batch) {
  std::vector<Tensor> gts;
  gts.reserve(batch.size());
  for (const auto* s : batch) gts.push_back(s->gt);
  return ad::constant(dataset::stack_batch(gts));
}

std::string batch_ids(const std::vector<const dataset::CompressedSample*>& batch) {
  std::string ids;
  for (const auto* s : batch) ids += (ids.empty() ? "" : " ") + s->id;
  return ids;
}

struct LogWriter {
  std::ofstream f;
  explicit LogWriter(const std::string& path) : f(path) {
    check(static_cast<bool>(f), "train: cannot open log " + path);
    f << "step,lr,sal1,sal2,sr,lr_long,rpl,lpl,total\n" << std::setprecision(17);
  }
  void row(std::int64_t step, double lr, const LossBundle& b) {
    f << step << "," << lr << "," << b.sal1 << "," << b.sal2 << "," << b.sr << "," << b.lr << ","
      << b.rpl << "," << b.lpl << "," << b.total << "\n";
    f.flush();
  }
};

Var constant_scalar_zero() { return ad::constant_scalar(0.0); }

void clip_gradients(net::ParamRegistry& params, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const auto& [name, p] : params.items()) {
    if (!p->grad_ready) continue;
    for (std::int64_t i = 0; i < p->grad.numel(); ++i) sq += p->grad[i] * p->grad[i];
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double scale = max_norm / norm;
  for (const auto& [name, p] : params.items())
    if (p->grad_ready) p->grad.scale_(scale);
}

TrainResult run_phase(const TrainConfig& cfg, const dataset::BenchmarkManifest& manifest,
                      const std::string& prior_ckpt, const std::string& out_dir) {
  cfg.validate();
  const bool target_phase = (cfg.phase == "target");
  fs::create_directories(out_dir);

  Loaded data = load_split(cfg, manifest);

  net::SaliencyNet model(cfg.network, mix_seed(cfg.seed, 0x10de1));
  std::optional<net::SaliencyNet> prior;
  std::uint64_t prior_hash_before = 0;
  if (target_phase) {
    net::NetworkConfig prior_cfg = cfg.network;
    prior_cfg.pretrained_weights.clear();
    prior.emplace(prior_cfg, mix_seed(cfg.seed, 0x10de1));
    net::load_checkpoint(prior_ckpt, *prior);
    prior->freeze();
    prior_hash_before = net::params_hash(prior->params());
  }

  Adam opt(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay);
  const std::int64_t steps_per_epoch =
      (static_cast<std::int64_t>(data.train.size()) + cfg.batch_size - 1) / cfg.batch_size;
  const std::int64_t total_steps =
      cfg.max_steps > 0 ? cfg.max_steps : steps_per_epoch * cfg.epochs;

  TrainResult result;
  result.log_csv = (fs::path(out_dir) / "train_log.csv").string();
  LogWriter log(result.log_csv);
  const std::array<double, 3> fill = {cfg.normalize.mean[0] * 255.0,
                                      cfg.normalize.mean[1] * 255.0,
                                      cfg.normalize.mean[2] * 255.0};

  double best_val = std::numeric_limits<double>::infinity();
  std::int64_t step = 0;
  bool done = false;
  nlohmann::json meta;
  meta["config"] = train_config_to_json(cfg);

  for (int epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
    // seeded shuffle per epoch
    std::vector<std::size_t> order(data.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(mix_seed(cfg.seed, 0xe90c4 + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);

    for (std::size_t off = 0; off < order.size() && !done; off += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<const dataset::CompressedSample*> batch;
      for (std::size_t i = off; i < std::min(order.size(), off + static_cast<std::size_t>(cfg.batch_size)); ++i)
        batch.push_back(&data.train[order[i]]);

      Var gt = batch_gt(batch);
      LossBundle bundle;
      Var total;
      // with both prior weights at zero the distillation terms cannot
      // influence the objective, so the prior forward is skipped entirely
      // and the components are reported as zero
      const bool use_hpl =
          target_phase && (cfg.weights.alpha != 0.0 || cfg.weights.beta != 0.0);
      if (!target_phase) {
        Var input = batch_input(batch, cfg.normalize, /*compressed=*/false, nullptr);
        net::ForwardOut out = model.forward(input, /*with_priors=*/false);
        Var sal1 = hpl::saliency_loss(out.sal1_logits, gt);
        Var sal2 = hpl::saliency_loss(out.sal2_logits, gt);
        total = ad::add(sal1, sal2);
        bundle.sal1 = ad::value0(sal1);
        bundle.sal2 = ad::value0(sal2);
        bundle.total = ad::value0(total);
      } else {
        // self-masking only touches the target input
        std::vector<Tensor> masked;
        masked.reserve(batch.size());
        for (const auto* s : batch)
          masked.push_back(
              hpl::self_mask(*s, cfg.weights.sml_probability, fill, cfg.seed, step));
        Var input = batch_input(batch, cfg.normalize, /*compressed=*/true, &masked);
        net::ForwardOut tout = model.forward(input, /*with_priors=*/use_hpl);

        Var sal1 = hpl::saliency_loss(tout.sal1_logits, gt);
        Var sal2 = hpl::saliency_loss(tout.sal2_logits, gt);
        bundle.sal1 = ad::value0(sal1);
        bundle.sal2 = ad::value0(sal2);
        if (use_hpl) {
          // the prior always sees the clean image
          Var clean = batch_input(batch, cfg.normalize, /*compressed=*/false, nullptr);
          net::ForwardOut pout = prior->forward(clean, /*with_priors=*/true);
          Var sr = hpl::short_range_loss(tout, pout);
          Var lrl = hpl::long_range_loss(tout, pout);
          Var rpl = ad::add(sr, lrl);
          Tensor fg = hpl::foreground_mask(gt->val, tout.s_l->val.dim(2), tout.s_l->val.dim(3));
          Var lpl = hpl::lpl_loss(tout.s_l, pout.s_l, ad::constant(fg));
          total = ad::add(ad::add(sal1, sal2),
                          ad::add(ad::affine(rpl, cfg.weights.alpha, 0.0),
                                  ad::affine(lpl, cfg.weights.beta, 0.0)));
          bundle.sr = ad::value0(sr);
          bundle.lr = ad::value0(lrl);
          bundle.rpl = ad::value0(rpl);
          bundle.lpl = ad::value0(lpl);
        } else {
          total = ad::add(ad::add(sal1, sal2),
                          ad::add(ad::affine(constant_scalar_zero(), cfg.weights.alpha, 0.0),
                                  ad::affine(constant_scalar_zero(), cfg.weights.beta, 0.0)));
        }
        bundle.total = ad::value0(total);
      }

      if (!std::isfinite(bundle.total)) {
        nlohmann::json dump;
        dump["step"] = step;
        dump["batch_ids"] = batch_ids(batch);
        std::ofstream d((fs::path(out_dir) / "nan_batch.json").string());
        d << dump.dump(2) << "\n";
        throw TrainAbort("train: non-finite loss at step " + std::to_string(step) +
                         ", batch ids: " + batch_ids(batch));
      }

      const double lr = lr_at(step, total_steps, cfg.max_lr);
      model.params().zero_grads();
      ad::backward(total);
      clip_gradients(model.params(), cfg.grad_clip_norm);
      opt.step(model.params(), lr);

      log.row(step, lr, bundle);
      result.trace.push_back(bundle);
      ++step;
      if (cfg.max_steps > 0 && step >= cfg.max_steps) done = true;
    }

    // checkpoint cadence: every epoch, plus best by validation MAE
    meta["epoch"] = epoch;
    meta["step"] = step;
    const std::string last = (fs::path(out_dir) / "ckpt_last.bin").string();
    if (!data.val.empty()) {
      const double val_mae =
          eval_mae(model, data.val, cfg.normalize, /*use_compressed=*/target_phase);
      meta["val_mae"] = val_mae;
      if (val_mae < best_val) {
        best_val = val_mae;
        net::save_checkpoint((fs::path(out_dir) / "ckpt_best.bin").string(), model, meta);
        result.best_checkpoint = (fs::path(out_dir) / "ckpt_best.bin").string();
      }
    }
    net::save_checkpoint(last, model, meta);
    result.last_checkpoint = last;
  }

  if (result.best_checkpoint.empty()) result.best_checkpoint = result.last_checkpoint;
  result.best_val_mae = best_val;
  result.steps_run = step;
  if (target_phase) {
    result.prior_hash_before = prior_hash_before;
    result.prior_hash_after = net::params_hash(prior->params());
  }
  return result;
}

}  // namespace

TrainResult train_prior(const TrainConfig& cfg, const dataset::BenchmarkManifest& manifest,
                        const std::string& out_dir) {
  check(cfg.phase == "prior", "train_prior: config phase must be 'prior'");
  return run_phase(cfg, manifest, "", out_dir);
}

TrainResult train_target(const TrainConfig& cfg, const dataset::BenchmarkManifest& manifest,
                         const std::string& prior_ckpt, const std::string& out_dir) {
  check(cfg.phase == "target", "train_target: config phase must be 'target'");
  TrainConfig c = cfg;
  if (c.prior_checkpoint.empty()) c.prior_checkpoint = prior_ckpt;
  return run_phase(c, manifest, prior_ckpt, out_dir);
}

}  // namespace cisod::train
