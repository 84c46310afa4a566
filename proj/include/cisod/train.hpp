#ifndef CISOD_TRAIN_HPP_
#define CISOD_TRAIN_HPP_

#include <string>
#include <vector>

#include "cisod/dataset.hpp"
#include "cisod/hpl.hpp"
#include "cisod/net.hpp"

namespace cisod::train {

struct TrainConfig {
  std::string phase = "prior";  // "prior" or "target"
  int epochs = 100;
  int batch_size = 12;
  double max_lr = 1e-4;
  std::string lr_schedule = "linear-decay";
  int image_size = 256;
  hpl::HPLWeights weights;
  std::uint64_t seed = 0;
  net::NetworkConfig network;
  dataset::NormalizeConfig normalize;

  // optimizer (adaptive moments; community-standard defaults)
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;     // off unless configured
  double grad_clip_norm = 0.0;   // 0 disables clipping
  double validation_fraction = 0.1;
  int max_steps = 0;             // 0 = run the full epoch budget

  // paths so a run is fully described by one file
  std::string train_manifest;
  std::string prior_checkpoint;  // required when phase == "target"
  std::string out_dir;

  void validate() const;
};

TrainConfig load_train_config(const std::string& path);
nlohmann::json train_config_to_json(const TrainConfig& cfg);

// linear decay from max_lr at step 0 to zero at total_steps
double lr_at(std::int64_t step, std::int64_t total_steps, double max_lr);

struct LossBundle {
  double sal1 = 0.0;
  double sal2 = 0.0;
  double sr = 0.0;
  double lr = 0.0;
  double rpl = 0.0;
  double lpl = 0.0;
  double total = 0.0;

  // the canonical combination order used by the training graph
  static double combine(double sal1, double sal2, double alpha, double rpl, double beta,
                        double lpl) {
    return (sal1 + sal2) + (alpha * rpl + beta * lpl);
  }
};

class Adam {
 public:
  Adam(double beta1, double beta2, double eps, double weight_decay)
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}
  void step(net::ParamRegistry& params, double lr);

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  std::int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

struct TrainResult {
  std::string last_checkpoint;
  std::string best_checkpoint;
  std::string log_csv;
  std::vector<LossBundle> trace;
  double best_val_mae = 0.0;
  std::int64_t steps_run = 0;
  // frozen-prior accounting (target phase only)
  std::uint64_t prior_hash_before = 0;
  std::uint64_t prior_hash_after = 0;
};

struct TrainAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// phase A: saliency losses only, clean images
TrainResult train_prior(const TrainConfig& cfg, const dataset::BenchmarkManifest& manifest,
                        const std::string& out_dir);

// phase B: frozen prior provides relation/location targets; compressed input
// with optional self-masking; full objective
TrainResult train_target(const TrainConfig& cfg, const dataset::BenchmarkManifest& manifest,
                         const std::string& prior_ckpt, const std::string& out_dir);

// eval-mode MAE of the final map over a list of samples (used for validation)
double eval_mae(const net::SaliencyNet& net, const std::vector<dataset::CompressedSample>& samples,
                const dataset::NormalizeConfig& norm, bool use_compressed);

}  // namespace cisod::train

#endif  // CISOD_TRAIN_HPP_
