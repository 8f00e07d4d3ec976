#ifndef TAGGER_TRAIN_HPP_
#define TAGGER_TRAIN_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tagger/data.hpp"
#include "tagger/eval.hpp"
#include "tagger/ladder.hpp"

namespace tagger::train {

// Flat key=value configuration (see configs/ for presets). Unset mode is
// filled in from the training data.
struct TrainConfig {
  std::optional<tag::DataMode> mode;
  std::size_t groups = 4;
  int t_train = 3;
  int t_eval = 5;
  double sigma = 0.2;
  double beta = 0.2;
  std::size_t batch_size = 100;
  int epochs_unsup = 30;
  int epochs_class = 0;
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t hidden_width = 256;
  std::vector<std::size_t> layers{256, 128};
  ad::NormMode norm = ad::NormMode::kLayer;
  std::uint64_t seed = 1;
  std::size_t class_count = 10;
  std::size_t head_width = 0;
  double class_weight = 1.0;
  bool class_all_iterations = false;
  bool eval_noise_in_likelihood = true;

  void validate() const;
  tag::CorruptionSpec corruption() const;
  LadderConfig ladder_config(std::size_t input_dim, bool with_head) const;
};

TrainConfig parse_config_text(const std::string& text);
TrainConfig load_config(const std::string& path);
std::string config_to_text(const TrainConfig& config);

// --- ADAM ----------------------------------------------------------------------

struct OptimizerState {
  ad::ParamBank m;  // first moments, mirroring parameter names/shapes
  ad::ParamBank v;  // second moments
  long long step = 0;

  void ensure(const ad::ParamBank& params);
};

// One bias-corrected ADAM update. Throws NumericError naming the parameter on
// a non-finite gradient; the parameters are left untouched in that case.
void adam_step(ad::ParamBank& params,
               const std::vector<std::pair<std::string, ad::Tensor>>& grads,
               OptimizerState& state, double lr, double beta1, double beta2, double eps);

// --- Checkpoints -----------------------------------------------------------------

struct Checkpoint {
  TaggerParams model;
  OptimizerState opt;
  TrainConfig config;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

// --- Training loops ---------------------------------------------------------------

struct EpochMetrics {
  int epoch = 0;
  double train_cost = 0.0;
  bool has_val = false;
  std::vector<double> val_costs;  // per evaluation iteration
};

std::string metrics_tsv(const std::vector<EpochMetrics>& metrics, int t_eval);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochMetrics> metrics;
};

using EpochSink = std::function<void(const Checkpoint&, const EpochMetrics&)>;

// Minimizes the iteration-averaged denoising cost. `val` (optional) drives
// per-epoch validation cost logging. `resume` continues from a checkpoint
// (its optimizer step counter carries on). Throws NumericError on divergence.
TrainResult train_unsupervised(const TrainConfig& config, const data::DatasetBundle& train_data,
                               const data::DatasetBundle* val, const Checkpoint* resume = nullptr,
                               const EpochSink& on_epoch = nullptr);

// Phase 1 unsupervised, then phase 2 with two fresh head layers and the
// summed cost C + class_weight * CE on the labeled subset.
TrainResult train_semisupervised(const TrainConfig& config, const data::DatasetBundle& train_data,
                                 const std::vector<std::size_t>& labeled_indices,
                                 const data::DatasetBundle* val,
                                 const Checkpoint* resume = nullptr,
                                 const EpochSink& on_epoch = nullptr);

// Evaluation seed derived from the training seed; cmd_eval exposes no --seed
// so reports stay bitwise reproducible for a given checkpoint.
std::uint64_t eval_seed(std::uint64_t train_seed);

}  // namespace tagger::train

#endif  // TAGGER_TRAIN_HPP_
