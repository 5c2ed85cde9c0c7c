#include "mti/features.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>

namespace mti {

void Waveform::validate() const {
  if (sample_rate <= 0) throw Error("invalid waveform: sample rate must be positive");
  if (samples.empty()) throw Error("invalid waveform: no samples");
  for (double s : samples)
    if (!std::isfinite(s)) throw Error("invalid waveform: non-finite sample");
}

WindowKind parse_window(std::string_view name) {
  if (name == "hann") return WindowKind::hann;
  if (name == "hamming") return WindowKind::hamming;
  if (name == "rect") return WindowKind::rect;
  throw Error("unknown window '" + std::string(name) + "'");
}

std::string_view window_name(WindowKind w) {
  switch (w) {
    case WindowKind::hann: return "hann";
    case WindowKind::hamming: return "hamming";
    case WindowKind::rect: return "rect";
  }
  return "?";
}

void StftConfig::validate() const {
  if (!(0 < hop_length && hop_length <= win_length && win_length <= fft_size))
    throw Error("invalid STFT config: need 0 < hop <= win <= fft (hop=" +
                std::to_string(hop_length) + ", win=" + std::to_string(win_length) +
                ", fft=" + std::to_string(fft_size) + ")");
}

std::vector<double> make_window(WindowKind kind, int length) {
  std::vector<double> w(static_cast<size_t>(length), 1.0);
  for (int n = 0; n < length; ++n) {
    double phase = 2.0 * M_PI * n / length;
    switch (kind) {
      case WindowKind::hann: w[n] = 0.5 - 0.5 * std::cos(phase); break;
      case WindowKind::hamming: w[n] = 0.54 - 0.46 * std::cos(phase); break;
      case WindowKind::rect: break;
    }
  }
  return w;
}

Eigen::Index FrameFeatures::frame_count() const {
  if (active.contains(Branch::PS)) return ps.frames.rows();
  if (active.contains(Branch::LFB)) return lfb.rows();
  if (active.contains(Branch::SSL) && ssl) return ssl->rows();
  return 0;
}

Eigen::Index FrameFeatures::width() const {
  Eigen::Index w = 0;
  if (active.contains(Branch::PS)) w += ps.frames.cols();
  if (active.contains(Branch::LFB)) w += lfb.cols();
  if (active.contains(Branch::SSL) && ssl) w += ssl->cols();
  return w;
}

Matrix FrameFeatures::stacked() const {
  Matrix out(frame_count(), width());
  Eigen::Index col = 0;
  auto put = [&](const Matrix& m) {
    out.middleCols(col, m.cols()) = m;
    col += m.cols();
  };
  if (active.contains(Branch::PS)) put(ps.frames);
  if (active.contains(Branch::LFB)) put(lfb);
  if (active.contains(Branch::SSL) && ssl) put(*ssl);
  return out;
}

size_t frame_count(size_t num_samples, const StftConfig& cfg) {
  cfg.validate();
  const auto win = static_cast<size_t>(cfg.win_length);
  if (num_samples < win)
    throw Error("utterance too short: " + std::to_string(num_samples) +
                " samples, need at least " + std::to_string(win));
  return (num_samples - win) / static_cast<size_t>(cfg.hop_length) + 1;
}

std::vector<double> power_spectrum(std::span<const double> frame, int fft_size,
                                   bool full_spectrum) {
  if (fft_size <= 0 || frame.size() > static_cast<size_t>(fft_size))
    throw Error("power_spectrum: frame longer than fft size");
  std::vector<double> padded(static_cast<size_t>(fft_size), 0.0);
  std::copy(frame.begin(), frame.end(), padded.begin());
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, padded);
  const size_t n = full_spectrum ? static_cast<size_t>(fft_size)
                                 : static_cast<size_t>(fft_size / 2 + 1);
  std::vector<double> out(n);
  for (size_t k = 0; k < n; ++k) out[k] = std::norm(spec[k]);
  return out;
}

PowerSpectrogram stft_power(const Waveform& wave, const StftConfig& cfg) {
  wave.validate();
  const size_t frames = frame_count(wave.samples.size(), cfg);
  const auto window = make_window(cfg.window, cfg.win_length);
  const int bins = cfg.bins();

  Eigen::FFT<double> fft;
  std::vector<double> buf(static_cast<size_t>(cfg.fft_size));
  std::vector<std::complex<double>> spec;
  PowerSpectrogram ps;
  ps.frames.resize(static_cast<Eigen::Index>(frames), bins);
  ps.frame_rate = static_cast<double>(wave.sample_rate) / cfg.hop_length;
  for (size_t f = 0; f < frames; ++f) {
    std::fill(buf.begin(), buf.end(), 0.0);
    const double* src = wave.samples.data() + f * static_cast<size_t>(cfg.hop_length);
    for (int n = 0; n < cfg.win_length; ++n) buf[n] = src[n] * window[n];
    fft.fwd(spec, buf);
    for (int k = 0; k < bins; ++k)
      ps.frames(static_cast<Eigen::Index>(f), k) = std::norm(spec[k]);
  }
  return ps;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

LfbBank lfb_init(int n_filters, const StftConfig& cfg, int sample_rate,
                 double floor_eps) {
  cfg.validate();
  const int bins = cfg.bins();
  if (n_filters < 1) throw Error("lfb_init: need at least one filter");
  if (n_filters > bins)
    throw Error("lfb_init: " + std::to_string(n_filters) + " filters exceed " +
                std::to_string(bins) + " spectral bins");
  if (sample_rate <= 0) throw Error("lfb_init: sample rate must be positive");

  const double nyquist = sample_rate / 2.0;
  const double mel_hi = hz_to_mel(nyquist);
  std::vector<double> edges(static_cast<size_t>(n_filters) + 2);
  for (size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_hi * static_cast<double>(i) / (n_filters + 1));

  LfbBank bank;
  bank.floor_eps = floor_eps;
  bank.weights = Matrix::Zero(n_filters, bins);
  const double bin_hz = static_cast<double>(sample_rate) / cfg.fft_size;
  for (int j = 0; j < n_filters; ++j) {
    const double lo = edges[j], center = edges[j + 1], hi = edges[j + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = k * bin_hz;
      double w = 0.0;
      if (f > lo && f <= center) {
        w = (f - lo) / (center - lo);
      } else if (f > center && f < hi) {
        w = (hi - f) / (hi - center);
      }
      bank.weights(j, k) = w;
    }
    // Filters narrower than a bin would otherwise be empty.
    if (bank.weights.row(j).maxCoeff() <= 0.0) {
      int k = static_cast<int>(std::lround(center / bin_hz));
      bank.weights(j, std::clamp(k, 0, bins - 1)) = 1.0;
    }
  }
  return bank;
}

Matrix lfb_forward(const Matrix& power, const Matrix& weights, double floor_eps) {
  if (power.cols() != weights.cols())
    throw Error("lfb_forward: spectrogram has " + std::to_string(power.cols()) +
                " bins but the bank expects " + std::to_string(weights.cols()));
  Matrix out = power * weights.transpose();
  return (out.array() + floor_eps).log().matrix();
}

Matrix lfb_forward(const PowerSpectrogram& ps, const LfbBank& bank) {
  return lfb_forward(ps.frames, bank.weights, bank.floor_eps);
}

Matrix lfb_backward(const Matrix& power, const Matrix& weights, double floor_eps,
                    const Matrix& grad_out) {
  Matrix linear = power * weights.transpose();
  Matrix scaled = grad_out.array() / (linear.array() + floor_eps);
  return scaled.transpose() * power;
}

FrameFeatures assemble_features(PowerSpectrogram ps, Matrix lfb_out,
                                std::optional<Matrix> ssl_aligned,
                                BranchSet branches) {
  if (branches.empty()) throw Error("assemble_features: no branch selected");
  std::vector<std::pair<std::string_view, Eigen::Index>> counts;
  if (branches.contains(Branch::PS)) counts.emplace_back("ps", ps.frames.rows());
  if (branches.contains(Branch::LFB)) counts.emplace_back("lfb", lfb_out.rows());
  if (branches.contains(Branch::SSL)) {
    if (!ssl_aligned) throw Error("assemble_features: ssl branch requested without embeddings");
    counts.emplace_back("ssl", ssl_aligned->rows());
  }
  for (const auto& [name, n] : counts) {
    if (n != counts.front().second)
      throw Error("frame count mismatch: " + std::string(counts.front().first) + " has " +
                  std::to_string(counts.front().second) + " frames but " +
                  std::string(name) + " has " + std::to_string(n));
  }
  FrameFeatures feat;
  feat.active = branches;
  feat.ps = std::move(ps);
  feat.lfb = std::move(lfb_out);
  if (branches.contains(Branch::SSL)) feat.ssl = std::move(ssl_aligned);
  return feat;
}

}  // namespace mti
