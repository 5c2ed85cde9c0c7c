#pragma once

#include "mti/config.hpp"
#include "mti/features.hpp"
#include "mti/layers.hpp"
#include "mti/params.hpp"

#include <cstdint>
#include <map>
#include <span>

namespace mti {

/// Which feature branches feed the network and how they are shaped.
struct FeatureLayout {
  BranchSet branches{Branch::PS, Branch::LFB, Branch::SSL};
  StftConfig stft;
  int sample_rate = 16000;
  int n_filters = 40;
  double floor_eps = 1e-8;
  int ssl_dim = 0;
  bool normalize = true;

  int ps_width() const { return branches.contains(Branch::PS) ? stft.bins() : 0; }
  int lfb_width() const { return branches.contains(Branch::LFB) ? n_filters : 0; }
  int ssl_width() const { return branches.contains(Branch::SSL) ? ssl_dim : 0; }
  /// Width of the PS+LFB block that goes through the convolution stack.
  int acoustic_width() const { return ps_width() + lfb_width(); }
};

enum class FrameActivation { sigmoid, linear };

struct ModelConfig {
  FeatureLayout features;
  std::vector<int> conv_channels{16, 32, 64, 128};
  int kernel_h = 3;
  int kernel_w = 3;
  int freq_stride = 3;
  int blstm_hidden = 128;
  int shared_fc = 128;
  int attn_dim = 128;
  TargetSet targets{Target::I, Target::W, Target::S};
  FrameActivation frame_activation = FrameActivation::sigmoid;
  uint64_t seed = 1;

  void validate() const;

  /// Frequency width after each convolution layer.
  std::vector<int> conv_widths() const;
  /// Per-frame width entering the BLSTM.
  int trunk_width() const;

  /// Reads "features.*", "stft.*", "lfb.*" and "model.*" keys.
  static ModelConfig from_config(const Config& cfg);
  void to_config(Config& cfg) const;
};

/// Per-bin statistics used to standardize the PS (log-compressed) and LFB
/// branches. Empty vectors mean "no normalization".
struct NormStats {
  Vector ps_mean, ps_std;
  Vector lfb_mean, lfb_std;

  bool empty() const { return ps_mean.size() == 0 && lfb_mean.size() == 0; }
  bool operator==(const NormStats&) const = default;
};

/// Glorot-style bound sqrt(6 / (rows + cols)) of a stored 2-D weight.
double init_limit(Eigen::Index rows, Eigen::Index cols);

/// Creates every tensor the config needs. Weight matrices are drawn from
/// U(-init_limit, init_limit) with a per-tensor stream derived from
/// (seed, name), so a tensor's initial value does not depend on which other
/// tensors exist. Biases start at zero; the LFB bank starts at mel triangles.
ParamStore init_params(const ModelConfig& cfg);

/// True for tensors that belong to a task head ("head.<T>.").
bool is_head_param(const std::string& name);

struct TaskScores {
  Vector frame_scores;
  double utt_score = 0.0;
};

struct ForwardOutput {
  std::map<Target, TaskScores> tasks;

  const TaskScores& at(Target t) const;
  bool has(Target t) const { return tasks.count(t) > 0; }
};

/// Arithmetic mean; throws on empty input.
double gap(std::span<const double> frame_scores);

/// Everything the backward pass needs from one forward call.
struct ForwardTrace {
  Eigen::Index frames = 0;
  Vector lfb_scale;  // d(normalized lfb)/d(raw lfb) per column
  std::vector<layers::ConvCache> conv;
  layers::LstmCache lstm_fwd, lstm_bwd;
  layers::DenseCache shared;
  struct Head {
    layers::AttentionCache attn;
    layers::DenseCache out;
  };
  std::map<Target, Head> heads;
};

/// Gradient of a scalar loss w.r.t. one utterance's outputs.
struct OutputGrad {
  std::map<Target, Vector> frame;
  std::map<Target, double> utt;
};

/// conv stack (acoustic branches) -> concat SSL -> BLSTM -> shared FC ->
/// per task: attention -> FC(1) -> frame activation -> GAP.
ForwardOutput forward(const FrameFeatures& feat, const ParamStore& params,
                      const ModelConfig& cfg, const NormStats* norm = nullptr,
                      ForwardTrace* trace = nullptr);

/// Accumulates parameter gradients into `grads` (same names as `params`).
/// When `grad_lfb` is non-null it receives the gradient w.r.t. feat.lfb.
void backward(const ForwardTrace& trace, const ParamStore& params, const ModelConfig& cfg,
              const OutputGrad& grad_out, ParamStore& grads, Matrix* grad_lfb = nullptr);

}  // namespace mti
