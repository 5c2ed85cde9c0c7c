#include "mti/model.hpp"

#include "mti/rng.hpp"

#include <cmath>

namespace mti {
namespace {

std::string conv_name(size_t layer, const char* what) {
  return "conv." + std::to_string(layer) + "." + what;
}

std::string head_name(Target t, const char* what) {
  return "head." + std::string(target_name(t)) + "." + what;
}

void check_positive(int v, const char* what) {
  if (v <= 0) throw Error(std::string("model config: ") + what + " must be positive");
}

}  // namespace

void ModelConfig::validate() const {
  features.stft.validate();
  if (features.branches.empty()) throw Error("model config: no feature branch selected");
  if (features.branches.contains(Branch::SSL) && features.ssl_dim <= 0)
    throw Error("model config: ssl branch needs a positive ssl_dim");
  if (features.branches.contains(Branch::LFB)) check_positive(features.n_filters, "lfb.n_filters");
  if (conv_channels.empty()) throw Error("model config: conv_channels must not be empty");
  for (int c : conv_channels) check_positive(c, "conv channel count");
  if (kernel_h % 2 == 0 || kernel_w % 2 == 0)
    throw Error("model config: conv kernel sizes must be odd");
  check_positive(kernel_h, "kernel_h");
  check_positive(kernel_w, "kernel_w");
  check_positive(freq_stride, "freq_stride");
  check_positive(blstm_hidden, "blstm_hidden");
  check_positive(shared_fc, "shared_fc");
  check_positive(attn_dim, "attn_dim");
  if (targets.empty()) throw Error("model config: at least one target must be active");
}

std::vector<int> ModelConfig::conv_widths() const {
  std::vector<int> widths;
  int w = features.acoustic_width();
  if (w == 0) return widths;
  for (size_t l = 0; l < conv_channels.size(); ++l) {
    layers::ConvShape shape{1, w, kernel_h, kernel_w, freq_stride};
    w = shape.width_out();
    widths.push_back(w);
  }
  return widths;
}

int ModelConfig::trunk_width() const {
  int width = features.ssl_width();
  auto widths = conv_widths();
  if (!widths.empty()) width += widths.back() * conv_channels.back();
  return width;
}

ModelConfig ModelConfig::from_config(const Config& cfg) {
  ModelConfig m;
  FeatureLayout& f = m.features;
  f.branches = BranchSet::parse(cfg.get("features.branches", "ps,lfb,ssl"));
  f.sample_rate = static_cast<int>(cfg.get_int("features.sample_rate", f.sample_rate));
  f.normalize = cfg.get_bool("features.normalize", f.normalize);
  f.ssl_dim = static_cast<int>(cfg.get_int("features.ssl_dim", f.ssl_dim));
  f.stft.win_length = static_cast<int>(cfg.get_int("stft.win_length", f.stft.win_length));
  f.stft.hop_length = static_cast<int>(cfg.get_int("stft.hop_length", f.stft.hop_length));
  f.stft.fft_size = static_cast<int>(cfg.get_int("stft.fft_size", f.stft.fft_size));
  f.stft.window = parse_window(cfg.get("stft.window", std::string(window_name(f.stft.window))));
  f.n_filters = static_cast<int>(cfg.get_int("lfb.n_filters", f.n_filters));
  f.floor_eps = cfg.get_double("lfb.floor_eps", f.floor_eps);

  m.conv_channels = cfg.get_int_list("model.conv_channels", m.conv_channels);
  auto kernel = cfg.get_int_list("model.conv_kernel", {m.kernel_h, m.kernel_w});
  if (kernel.size() != 2) throw Error("model.conv_kernel must be h,w");
  m.kernel_h = kernel[0];
  m.kernel_w = kernel[1];
  m.freq_stride = static_cast<int>(cfg.get_int("model.freq_stride", m.freq_stride));
  m.blstm_hidden = static_cast<int>(cfg.get_int("model.blstm_hidden", m.blstm_hidden));
  m.shared_fc = static_cast<int>(cfg.get_int("model.shared_fc", m.shared_fc));
  m.attn_dim = static_cast<int>(cfg.get_int("model.attn_dim", m.attn_dim));
  m.targets = TargetSet::parse(cfg.get("model.targets", m.targets.to_string()));
  const std::string act = cfg.get("model.frame_activation", "sigmoid");
  if (act == "sigmoid") {
    m.frame_activation = FrameActivation::sigmoid;
  } else if (act == "linear") {
    m.frame_activation = FrameActivation::linear;
  } else {
    throw Error("model.frame_activation must be sigmoid or linear");
  }
  m.seed = static_cast<uint64_t>(cfg.get_int("model.seed", static_cast<long long>(m.seed)));
  return m;
}

void ModelConfig::to_config(Config& cfg) const {
  auto list = [](const std::vector<int>& v) {
    std::string s;
    for (int x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
    return s;
  };
  cfg.set("features.branches", features.branches.to_string());
  cfg.set("features.sample_rate", std::to_string(features.sample_rate));
  cfg.set("features.normalize", features.normalize ? "1" : "0");
  cfg.set("features.ssl_dim", std::to_string(features.ssl_dim));
  cfg.set("stft.win_length", std::to_string(features.stft.win_length));
  cfg.set("stft.hop_length", std::to_string(features.stft.hop_length));
  cfg.set("stft.fft_size", std::to_string(features.stft.fft_size));
  cfg.set("stft.window", std::string(window_name(features.stft.window)));
  cfg.set("lfb.n_filters", std::to_string(features.n_filters));
  cfg.set("lfb.floor_eps", format_double(features.floor_eps));
  cfg.set("model.conv_channels", list(conv_channels));
  cfg.set("model.conv_kernel", list({kernel_h, kernel_w}));
  cfg.set("model.freq_stride", std::to_string(freq_stride));
  cfg.set("model.blstm_hidden", std::to_string(blstm_hidden));
  cfg.set("model.shared_fc", std::to_string(shared_fc));
  cfg.set("model.attn_dim", std::to_string(attn_dim));
  cfg.set("model.targets", targets.to_string());
  cfg.set("model.frame_activation",
          frame_activation == FrameActivation::sigmoid ? "sigmoid" : "linear");
  cfg.set("model.seed", std::to_string(seed));
}

double init_limit(Eigen::Index rows, Eigen::Index cols) {
  return std::sqrt(6.0 / static_cast<double>(rows + cols));
}

bool is_head_param(const std::string& name) { return name.rfind("head.", 0) == 0; }

ParamStore init_params(const ModelConfig& cfg) {
  cfg.validate();
  ParamStore store;
  auto weight = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    Rng rng(cfg.seed ^ fnv1a64(name));
    const double limit = init_limit(rows, cols);
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.uniform(-limit, limit);
    store.add(name, std::move(m));
  };
  auto bias = [&](const std::string& name, Eigen::Index n) { store.add(name, Matrix::Zero(1, n)); };

  const FeatureLayout& f = cfg.features;
  if (f.branches.contains(Branch::LFB))
    store.add("lfb.weights", lfb_init(f.n_filters, f.stft, f.sample_rate, f.floor_eps).weights);

  if (f.acoustic_width() > 0) {
    int c_in = 1;
    for (size_t l = 0; l < cfg.conv_channels.size(); ++l) {
      const int c_out = cfg.conv_channels[l];
      // Glorot on fan_in + fan_out of the stored patch matrix.
      weight(conv_name(l, "kernel"), Eigen::Index(cfg.kernel_h) * cfg.kernel_w * c_in, c_out);
      bias(conv_name(l, "bias"), c_out);
      c_in = c_out;
    }
  }

  const int trunk = cfg.trunk_width();
  const int hidden = cfg.blstm_hidden;
  for (const char* dir : {"fwd", "bwd"}) {
    const std::string p = std::string("blstm.") + dir + ".";
    weight(p + "wx", trunk, 4 * hidden);
    weight(p + "wh", hidden, 4 * hidden);
    bias(p + "b", 4 * hidden);
  }
  weight("fc.weight", 2 * hidden, cfg.shared_fc);
  bias("fc.bias", cfg.shared_fc);

  for (Target t : cfg.targets.list()) {
    weight(head_name(t, "attn.wq"), cfg.shared_fc, cfg.attn_dim);
    weight(head_name(t, "attn.wk"), cfg.shared_fc, cfg.attn_dim);
    weight(head_name(t, "attn.wv"), cfg.shared_fc, cfg.shared_fc);
    weight(head_name(t, "out.weight"), cfg.shared_fc, 1);
    bias(head_name(t, "out.bias"), 1);
  }
  return store;
}

const TaskScores& ForwardOutput::at(Target t) const {
  auto it = tasks.find(t);
  if (it == tasks.end())
    throw Error("no prediction for target " + std::string(target_name(t)));
  return it->second;
}

double gap(std::span<const double> frame_scores) {
  if (frame_scores.empty()) throw Error("gap: empty score sequence");
  double sum = 0.0;
  for (double v : frame_scores) sum += v;
  return sum / static_cast<double>(frame_scores.size());
}

ForwardOutput forward(const FrameFeatures& feat, const ParamStore& params,
                      const ModelConfig& cfg, const NormStats* norm, ForwardTrace* trace) {
  const FeatureLayout& layout = cfg.features;
  if (!(feat.active == layout.branches))
    throw Error("feature branches " + feat.active.to_string() + " do not match model branches " +
                layout.branches.to_string());
  auto check_width = [](const char* what, Eigen::Index got, int want) {
    if (got != want)
      throw Error(std::string("feature width mismatch: ") + what + " has " +
                  std::to_string(got) + " columns, model expects " + std::to_string(want));
  };
  if (layout.branches.contains(Branch::PS)) check_width("ps", feat.ps.frames.cols(), layout.ps_width());
  if (layout.branches.contains(Branch::LFB)) check_width("lfb", feat.lfb.cols(), layout.lfb_width());
  if (layout.branches.contains(Branch::SSL)) {
    if (!feat.ssl) throw Error("ssl branch active but no embeddings supplied");
    check_width("ssl", feat.ssl->cols(), layout.ssl_width());
  }
  const Eigen::Index frames = feat.frame_count();
  if (frames < 1) throw Error("forward: utterance has no frames");
  const bool use_norm = norm != nullptr && layout.normalize;

  std::vector<Matrix> trunk_parts;
  const int acoustic = layout.acoustic_width();
  int flat_width = 0;
  if (acoustic > 0) {
    Matrix x0(frames, acoustic);
    Eigen::Index col = 0;
    if (layout.branches.contains(Branch::PS)) {
      Matrix ps = (feat.ps.frames.array() + layout.floor_eps).log().matrix();
      if (use_norm && norm->ps_mean.size() == ps.cols()) {
        ps.rowwise() -= norm->ps_mean.transpose();
        ps.array().rowwise() /= norm->ps_std.transpose().array();
      }
      x0.leftCols(ps.cols()) = ps;
      col += ps.cols();
    }
    Vector lfb_scale = Vector::Ones(layout.lfb_width());
    if (layout.branches.contains(Branch::LFB)) {
      Matrix lfb = feat.lfb;
      if (use_norm && norm->lfb_mean.size() == lfb.cols()) {
        lfb.rowwise() -= norm->lfb_mean.transpose();
        lfb_scale = norm->lfb_std.cwiseInverse();
        lfb.array().rowwise() *= lfb_scale.transpose().array();
      }
      x0.middleCols(col, lfb.cols()) = lfb;
    }

    Matrix x(frames * acoustic, 1);
    for (Eigen::Index t = 0; t < frames; ++t)
      x.block(t * acoustic, 0, acoustic, 1) = x0.row(t).transpose();

    int width = acoustic;
    if (trace) trace->conv.resize(cfg.conv_channels.size());
    for (size_t l = 0; l < cfg.conv_channels.size(); ++l) {
      layers::ConvShape shape{static_cast<int>(frames), width, cfg.kernel_h, cfg.kernel_w,
                              cfg.freq_stride};
      x = layers::conv_forward(x, shape, params.at(conv_name(l, "kernel")),
                               params.at(conv_name(l, "bias")), trace ? &trace->conv[l] : nullptr);
      width = shape.width_out();
    }
    const Eigen::Index channels = x.cols();
    flat_width = width * static_cast<int>(channels);
    Matrix flat(frames, flat_width);
    for (Eigen::Index t = 0; t < frames; ++t)
      for (int w = 0; w < width; ++w)
        flat.block(t, w * channels, 1, channels) = x.row(t * width + w);
    trunk_parts.push_back(std::move(flat));
    if (trace) trace->lfb_scale = lfb_scale;
  }
  if (layout.branches.contains(Branch::SSL)) trunk_parts.push_back(*feat.ssl);

  Matrix trunk_in(frames, cfg.trunk_width());
  {
    Eigen::Index col = 0;
    for (const Matrix& part : trunk_parts) {
      trunk_in.middleCols(col, part.cols()) = part;
      col += part.cols();
    }
  }

  Matrix hf = layers::lstm_forward(trunk_in, params.at("blstm.fwd.wx"), params.at("blstm.fwd.wh"),
                                   params.at("blstm.fwd.b"), false,
                                   trace ? &trace->lstm_fwd : nullptr);
  Matrix hb = layers::lstm_forward(trunk_in, params.at("blstm.bwd.wx"), params.at("blstm.bwd.wh"),
                                   params.at("blstm.bwd.b"), true,
                                   trace ? &trace->lstm_bwd : nullptr);
  Matrix h(frames, hf.cols() + hb.cols());
  h << hf, hb;
  Matrix shared = layers::dense_forward(h, params.at("fc.weight"), params.at("fc.bias"),
                                        layers::Activation::relu,
                                        trace ? &trace->shared : nullptr);

  const auto act = cfg.frame_activation == FrameActivation::sigmoid ? layers::Activation::sigmoid
                                                                     : layers::Activation::none;
  ForwardOutput out;
  for (Target t : cfg.targets.list()) {
    ForwardTrace::Head* head = trace ? &trace->heads[t] : nullptr;
    Matrix attended = layers::attention_forward(
        shared, params.at(head_name(t, "attn.wq")), params.at(head_name(t, "attn.wk")),
        params.at(head_name(t, "attn.wv")), nullptr, head ? &head->attn : nullptr);
    Matrix scores = layers::dense_forward(attended, params.at(head_name(t, "out.weight")),
                                          params.at(head_name(t, "out.bias")), act,
                                          head ? &head->out : nullptr);
    TaskScores ts;
    ts.frame_scores = scores.col(0);
    ts.utt_score = gap(std::span<const double>(ts.frame_scores.data(), ts.frame_scores.size()));
    out.tasks.emplace(t, std::move(ts));
  }
  if (trace) trace->frames = frames;
  return out;
}

void backward(const ForwardTrace& trace, const ParamStore& params, const ModelConfig& cfg,
              const OutputGrad& grad_out, ParamStore& grads, Matrix* grad_lfb) {
  const Eigen::Index frames = trace.frames;
  Matrix d_shared = Matrix::Zero(frames, cfg.shared_fc);
  for (Target t : cfg.targets.list()) {
    Vector d_frame = Vector::Zero(frames);
    if (auto it = grad_out.frame.find(t); it != grad_out.frame.end()) d_frame += it->second;
    if (auto it = grad_out.utt.find(t); it != grad_out.utt.end())
      d_frame.array() += it->second / static_cast<double>(frames);
    const ForwardTrace::Head& head = trace.heads.at(t);
    Matrix d_attended = layers::dense_backward(
        head.out, params.at(head_name(t, "out.weight")), d_frame,
        grads.at(head_name(t, "out.weight")), grads.at(head_name(t, "out.bias")));
    d_shared += layers::attention_backward(
        head.attn, params.at(head_name(t, "attn.wq")), params.at(head_name(t, "attn.wk")),
        params.at(head_name(t, "attn.wv")), d_attended, grads.at(head_name(t, "attn.wq")),
        grads.at(head_name(t, "attn.wk")), grads.at(head_name(t, "attn.wv")));
  }

  Matrix d_h = layers::dense_backward(trace.shared, params.at("fc.weight"), d_shared,
                                      grads.at("fc.weight"), grads.at("fc.bias"));
  const Eigen::Index hidden = cfg.blstm_hidden;
  Matrix d_trunk = layers::lstm_backward(trace.lstm_fwd, params.at("blstm.fwd.wx"),
                                         params.at("blstm.fwd.wh"), d_h.leftCols(hidden),
                                         grads.at("blstm.fwd.wx"), grads.at("blstm.fwd.wh"),
                                         grads.at("blstm.fwd.b"));
  d_trunk += layers::lstm_backward(trace.lstm_bwd, params.at("blstm.bwd.wx"),
                                   params.at("blstm.bwd.wh"), d_h.rightCols(hidden),
                                   grads.at("blstm.bwd.wx"), grads.at("blstm.bwd.wh"),
                                   grads.at("blstm.bwd.b"));

  const FeatureLayout& layout = cfg.features;
  const int acoustic = layout.acoustic_width();
  if (acoustic == 0) return;

  const auto widths = cfg.conv_widths();
  const int width = widths.back();
  const Eigen::Index channels = cfg.conv_channels.back();
  Matrix dx(frames * width, channels);
  for (Eigen::Index t = 0; t < frames; ++t)
    for (int w = 0; w < width; ++w) dx.row(t * width + w) = d_trunk.block(t, w * channels, 1, channels);
  for (size_t l = cfg.conv_channels.size(); l-- > 0;) {
    dx = layers::conv_backward(trace.conv[l], params.at(conv_name(l, "kernel")), dx,
                               grads.at(conv_name(l, "kernel")), grads.at(conv_name(l, "bias")));
  }
  if (grad_lfb && layout.branches.contains(Branch::LFB)) {
    const int offset = layout.ps_width();
    grad_lfb->resize(frames, layout.lfb_width());
    for (Eigen::Index t = 0; t < frames; ++t)
      for (int j = 0; j < layout.lfb_width(); ++j)
        (*grad_lfb)(t, j) = dx(t * acoustic + offset + j, 0) * trace.lfb_scale(j);
  }
}

}  // namespace mti
