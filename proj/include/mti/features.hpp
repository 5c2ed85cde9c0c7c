#pragma once

#include "mti/types.hpp"

#include <optional>
#include <span>
#include <vector>

namespace mti {

/// Mono PCM signal, linear amplitude nominally in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  /// Throws Error("invalid waveform: ...") when empty, non-finite or the
  /// rate is not positive.
  void validate() const;
};

enum class WindowKind { hann, hamming, rect };

WindowKind parse_window(std::string_view name);
std::string_view window_name(WindowKind w);

struct StftConfig {
  int win_length = 512;
  int hop_length = 256;
  int fft_size = 512;
  WindowKind window = WindowKind::hann;

  int bins() const { return fft_size / 2 + 1; }
  void validate() const;
};

/// Periodic window of the given length (rect is all ones).
std::vector<double> make_window(WindowKind kind, int length);

/// F_u x (fft_size/2 + 1) matrix of |X(f,k)|^2.
struct PowerSpectrogram {
  Matrix frames;
  double frame_rate = 0.0;

  Eigen::Index frame_count() const { return frames.rows(); }
};

/// Trainable spectral projection, log-compressed on output.
struct LfbBank {
  Matrix weights;  // n_filters x bins
  double floor_eps = 1e-8;

  int n_filters() const { return static_cast<int>(weights.rows()); }
};

/// Per-frame cross-domain feature stack. Branches that are not active may
/// be left empty.
struct FrameFeatures {
  PowerSpectrogram ps;
  Matrix lfb;
  std::optional<Matrix> ssl;
  BranchSet active;

  Eigen::Index frame_count() const;
  Eigen::Index width() const;
  /// Active branches concatenated column-wise in PS, LFB, SSL order.
  Matrix stacked() const;
};

/// floor((num_samples - win) / hop) + 1; throws "utterance too short" when
/// fewer than win_length samples are available.
size_t frame_count(size_t num_samples, const StftConfig& cfg);

/// |DFT|^2 of `frame` zero-padded to fft_size. Returns bins 0..fft_size/2,
/// or all fft_size bins when `full_spectrum` is set.
std::vector<double> power_spectrum(std::span<const double> frame, int fft_size,
                                   bool full_spectrum = false);

PowerSpectrogram stft_power(const Waveform& wave, const StftConfig& cfg);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Mel-spaced triangles spanning 0..Nyquist.
LfbBank lfb_init(int n_filters, const StftConfig& cfg, int sample_rate,
                 double floor_eps = 1e-8);

/// log(floor_eps + power * weights^T).
Matrix lfb_forward(const Matrix& power, const Matrix& weights, double floor_eps);
Matrix lfb_forward(const PowerSpectrogram& ps, const LfbBank& bank);

/// Gradient of a scalar loss w.r.t. the bank weights given the gradient
/// w.r.t. the lfb_forward output.
Matrix lfb_backward(const Matrix& power, const Matrix& weights, double floor_eps,
                    const Matrix& grad_out);

FrameFeatures assemble_features(PowerSpectrogram ps, Matrix lfb_out,
                                std::optional<Matrix> ssl_aligned,
                                BranchSet branches);

}  // namespace mti
