#pragma once

#include "mti/checkpoint.hpp"
#include "mti/loss.hpp"
#include "mti/model.hpp"

#include <functional>
#include <optional>
#include <span>
#include <stdexcept>

namespace mti {

/// Precomputed per-utterance inputs: the power spectrogram (the LFB branch
/// is recomputed from it with the current bank on every step) and the SSL
/// embeddings already aligned to the STFT frame grid.
struct UtteranceInput {
  Matrix power;
  std::optional<Matrix> ssl;
};

struct TrainItem {
  std::string utt_id;
  UtteranceInput input;
  UtteranceLabels labels;
};

/// Raised when a forward value or gradient becomes NaN/inf.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Applies the LFB bank held in `params` and stacks the active branches.
FrameFeatures build_features(const UtteranceInput& input, const ParamStore& params,
                             const ModelConfig& cfg);

ForwardOutput predict(const UtteranceInput& input, const ParamStore& params,
                      const ModelConfig& cfg, const NormStats& norm);
ForwardOutput predict(const UtteranceInput& input, const Checkpoint& ckpt);

/// Per-bin mean/std of log-compressed PS and of LFB output (with the bank
/// in `params`) over every frame of `items`.
NormStats compute_norm_stats(std::span<const TrainItem* const> items, const ParamStore& params,
                             const ModelConfig& cfg);
NormStats compute_norm_stats(std::span<const TrainItem> items, const ParamStore& params,
                             const ModelConfig& cfg);

struct GradientResult {
  LossTerms terms;
  ParamStore grads;
};

/// Loss and gradients for one batch, including the LFB bank. Utterances
/// are processed independently (optionally on `threads` workers) and
/// their gradients summed in batch order, so the result does not depend on
/// the thread count. Throws NumericalError naming the first non-finite
/// gradient tensor.
GradientResult compute_gradients(std::span<const TrainItem* const> batch,
                                 const ParamStore& params, const ModelConfig& cfg,
                                 const LossConfig& loss, const NormStats& norm, int threads = 1);

/// Value of the batch objective only (no gradients).
LossTerms batch_loss(std::span<const TrainItem* const> batch, const ParamStore& params,
                     const ModelConfig& cfg, const LossConfig& loss, const NormStats& norm);

enum class Algorithm { adam, sgd };

struct OptimConfig {
  Algorithm algorithm = Algorithm::adam;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double momentum = 0.9;  // sgd only
  int epochs = 30;
  int batch_size = 4;
  int patience = 10;
  double grad_clip = 5.0;  // global L2 norm; <= 0 disables
  uint64_t seed = 1;
  double val_fraction = 0.1;
  int threads = 1;
  bool deterministic = false;

  void validate() const;
  static OptimConfig from_config(const Config& cfg);
  void to_config(Config& cfg) const;
};

/// Adam (with bias correction) or momentum SGD over a ParamStore.
class Optimizer {
 public:
  explicit Optimizer(const OptimConfig& cfg) : cfg_(cfg) {}
  void step(ParamStore& params, const ParamStore& grads);
  long steps() const { return steps_; }

 private:
  OptimConfig cfg_;
  ParamStore first_, second_;
  long steps_ = 0;
};

/// Clips to the global norm limit; returns the norm before clipping.
double clip_gradients(ParamStore& grads, double max_norm);

struct EpochLog {
  int epoch = 0;
  double objective = 0.0;
  std::map<Target, double> task_loss;
  std::map<Target, std::optional<double>> val_lcc;

  /// {"epoch":..,"O":..,"L_I":..,"L_W":..,"L_S":..,"val_lcc_I":..,...};
  /// inactive terms are 0 and undefined correlations are null.
  std::string to_json() const;
};

struct TransferReport {
  std::vector<std::string> copied;
  std::vector<std::string> fresh;
};

/// Initializes `target_cfg` and copies every source tensor whose name and
/// shape match. A name match with a different shape is an error listing
/// all offending tensors.
ParamStore transfer_init(const Checkpoint& source, const ModelConfig& target_cfg,
                         TransferReport* report = nullptr);

struct TrainResult {
  Checkpoint best;
  int best_epoch = 0;
  std::vector<EpochLog> log;
  bool diverged = false;
  std::string message;
  TransferReport transfer;
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
};

/// Target whose validation LCC drives early stopping: I when active,
/// otherwise the first active target.
Target selection_target(const TargetSet& targets);

/// Minimizes the multi-task objective on a seed-deterministic train/val
/// split of `items`, keeping the epoch with the best validation LCC of
/// selection_target() (earliest on ties). On a non-finite loss or gradient
/// training stops early with diverged=true and the last good checkpoint.
TrainResult train(std::span<const TrainItem> items, const ModelConfig& model_cfg,
                  const LossConfig& loss_cfg, const OptimConfig& optim_cfg,
                  const Checkpoint* warm_start = nullptr,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace mti
