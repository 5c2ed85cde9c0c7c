#pragma once

#include "mti/config.hpp"
#include "mti/embedding_io.hpp"
#include "mti/features.hpp"
#include "mti/manifest.hpp"

#include <cstdint>
#include <filesystem>

namespace mti {

enum class NoiseKind { white, pink, babble };

std::string_view noise_name(NoiseKind k);

/// Desk-scale stand-in corpus: harmonic "speech surrogates" in noise, with
/// labels that are exact logistic functions of the mixing SNR.
struct SynthConfig {
  int n_utts = 600;
  int n_test = 100;  // the last n_test utterances get split=test
  double duration_s = 1.0;
  double snr_db_lo = -10.0;
  double snr_db_hi = 20.0;
  std::vector<NoiseKind> noise_kinds{NoiseKind::white, NoiseKind::pink, NoiseKind::babble};
  uint64_t seed = 1;
  int sample_rate = 16000;
  double label_noise = 0.0;  // std-dev of optional Gaussian label noise
  bool surrogate_embeddings = true;
  int surrogate_dim = 40;

  void validate() const;
  /// Reads "synth.*" keys.
  static SynthConfig from_config(const Config& cfg);
};

double intelligibility_label(double snr_db);
double wer_label(double snr_db);
double stoi_label(double snr_db);

struct SynthUtterance {
  std::string utt_id;
  double snr_db = 0.0;
  NoiseKind noise = NoiseKind::white;
  Waveform wave;  // quantized to the 16-bit grid it is stored with
  UtteranceLabels labels;
};

/// Generates utterance `index` of the corpus. Each utterance uses its own
/// seed derived from (cfg.seed, index).
SynthUtterance synth_utterance(const SynthConfig& cfg, int index);

/// Log-mel "SSL" surrogate at 50 Hz (25 ms window, 20 ms hop).
EmbeddingSeq surrogate_embedding(const Waveform& wave, int dim);

struct SynthResult {
  std::filesystem::path manifest_path;
  std::filesystem::path metadata_path;
  std::filesystem::path embeddings_dir;  // empty when surrogates are off
  std::vector<ManifestRecord> records;
};

/// Writes <out>/wavs/<id>.wav, <out>/manifest.csv, <out>/synth_meta.json
/// and, when enabled, <out>/embeddings/<id>.mtie.
SynthResult gen_synthetic(const SynthConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace mti
