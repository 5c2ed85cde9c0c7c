#pragma once

#include "mti/config.hpp"
#include "mti/model.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mti {

/// Weights between the utterance-level and frame-level squared errors.
struct LossConfig {
  double alpha_i = 1.0;
  double alpha_w = 1.0;
  double alpha_s = 1.0;
  TargetSet targets{Target::I, Target::W, Target::S};

  double alpha(Target t) const;
  void set_alpha(Target t, double v);
  void validate() const;

  static LossConfig from_config(const Config& cfg);
  void to_config(Config& cfg) const;
};

/// Ground-truth scores of one utterance; each in [0, 1] when present.
struct UtteranceLabels {
  std::optional<double> intelligibility;
  std::optional<double> wer;
  std::optional<double> stoi;

  std::optional<double> get(Target t) const;
  void set(Target t, std::optional<double> v);
  /// Throws when a present value is non-finite or outside [0, 1].
  void validate() const;
};

struct TaskLoss {
  double utterance = 0.0;  // (1/U) sum_u (T_u - That_u)^2
  double frame = 0.0;      // (1/U) sum_u alpha_T/F_u sum_f (T_u - t_f)^2
  double total() const { return utterance + frame; }
};

struct LossTerms {
  double total = 0.0;
  std::map<Target, TaskLoss> tasks;

  /// L_T, or 0 for an inactive target.
  double term(Target t) const;
};

/// O = sum over active targets T of
///   L_T = (1/U) sum_u [ (T_u - That_u)^2 + alpha_T/F_u sum_f (T_u - t_f)^2 ].
/// When `grads` is non-null it receives dO/d(outputs) per utterance.
LossTerms multitask_loss(std::span<const ForwardOutput> outputs,
                         std::span<const UtteranceLabels> labels, const LossConfig& cfg,
                         std::span<const std::string> utt_ids = {},
                         std::vector<OutputGrad>* grads = nullptr);

}  // namespace mti
