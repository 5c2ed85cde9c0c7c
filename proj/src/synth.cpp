#include "mti/synth.hpp"

#include "mti/rng.hpp"
#include "mti/wav.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace mti {
namespace {

constexpr double kTwoPi = 2.0 * M_PI;

std::vector<double> harmonic_complex(Rng& rng, size_t n, int sample_rate, double am_rate) {
  const double f0 = rng.uniform(100.0, 220.0);
  const double glide_phase = rng.uniform(0.0, kTwoPi);
  const double f1 = rng.uniform(300.0, 900.0);
  const double f2 = rng.uniform(900.0, 2500.0);
  const double am_phase = rng.uniform(0.0, kTwoPi);
  const int n_harm = static_cast<int>(4000.0 / f0);
  std::vector<double> amp(n_harm), phase(n_harm);
  for (int h = 1; h <= n_harm; ++h) {
    const double f = h * f0;
    const double formants = 1.0 + 2.0 * std::exp(-std::pow((f - f1) / 200.0, 2)) +
                            1.5 * std::exp(-std::pow((f - f2) / 300.0, 2));
    amp[h - 1] = formants / h;
    phase[h - 1] = rng.uniform(0.0, kTwoPi);
  }
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double inst = f0 * (1.0 + 0.08 * std::sin(kTwoPi * 0.5 * t + glide_phase));
    double v = 0.0;
    for (int h = 1; h <= n_harm; ++h) {
      phase[h - 1] += kTwoPi * h * inst / sample_rate;
      v += amp[h - 1] * std::sin(phase[h - 1]);
    }
    const double envelope = 0.05 + 0.95 * 0.5 * (1.0 - std::cos(kTwoPi * am_rate * t + am_phase));
    out[i] = v * envelope;
  }
  return out;
}

void normalize_rms(std::vector<double>& x) {
  double sq = 0.0;
  for (double v : x) sq += v * v;
  const double rms = std::sqrt(sq / static_cast<double>(x.size()));
  if (rms > 0.0)
    for (double& v : x) v /= rms;
}

std::vector<double> make_noise(Rng& rng, NoiseKind kind, size_t n, int sample_rate) {
  std::vector<double> out(n, 0.0);
  switch (kind) {
    case NoiseKind::white:
      for (double& v : out) v = rng.normal();
      break;
    case NoiseKind::pink: {
      // Paul Kellet's economy pink filter.
      double b0 = 0, b1 = 0, b2 = 0;
      for (double& v : out) {
        const double w = rng.normal();
        b0 = 0.99765 * b0 + w * 0.0990460;
        b1 = 0.96300 * b1 + w * 0.2965164;
        b2 = 0.57000 * b2 + w * 1.0526913;
        v = b0 + b1 + b2 + w * 0.1848;
      }
      break;
    }
    case NoiseKind::babble:
      for (int talker = 0; talker < 5; ++talker) {
        auto voice = harmonic_complex(rng, n, sample_rate, rng.uniform(3.0, 6.0));
        normalize_rms(voice);
        for (size_t i = 0; i < n; ++i) out[i] += voice[i];
      }
      break;
  }
  normalize_rms(out);
  return out;
}

NoiseKind parse_noise(std::string_view s) {
  if (s == "white") return NoiseKind::white;
  if (s == "pink") return NoiseKind::pink;
  if (s == "babble" || s == "babble-surrogate") return NoiseKind::babble;
  throw Error("unknown noise kind '" + std::string(s) + "'");
}

}  // namespace

std::string_view noise_name(NoiseKind k) {
  switch (k) {
    case NoiseKind::white: return "white";
    case NoiseKind::pink: return "pink";
    case NoiseKind::babble: return "babble";
  }
  return "?";
}

void SynthConfig::validate() const {
  if (n_utts < 1) throw Error("synth: n_utts must be positive");
  if (n_test < 0 || n_test > n_utts) throw Error("synth: n_test must be in [0, n_utts]");
  if (!(snr_db_lo < snr_db_hi)) throw Error("synth: need snr_db_lo < snr_db_hi");
  if (!(duration_s >= 0.5)) throw Error("synth: duration must be at least 0.5 s");
  if (noise_kinds.empty()) throw Error("synth: no noise kinds");
  if (sample_rate <= 0) throw Error("synth: sample rate must be positive");
  if (label_noise < 0.0) throw Error("synth: label_noise must be >= 0");
  if (surrogate_dim < 1) throw Error("synth: surrogate_dim must be positive");
}

SynthConfig SynthConfig::from_config(const Config& cfg) {
  SynthConfig s;
  s.n_utts = static_cast<int>(cfg.get_int("synth.n_utts", s.n_utts));
  s.n_test = static_cast<int>(cfg.get_int("synth.n_test", s.n_test));
  s.duration_s = cfg.get_double("synth.duration_s", s.duration_s);
  s.snr_db_lo = cfg.get_double("synth.snr_db_lo", s.snr_db_lo);
  s.snr_db_hi = cfg.get_double("synth.snr_db_hi", s.snr_db_hi);
  if (cfg.has("synth.noise_kinds")) {
    s.noise_kinds.clear();
    for (const auto& part : split(cfg.get("synth.noise_kinds", ""), ','))
      if (!trim(part).empty()) s.noise_kinds.push_back(parse_noise(trim(part)));
  }
  s.seed = static_cast<uint64_t>(cfg.get_int("synth.seed", static_cast<long long>(s.seed)));
  s.sample_rate = static_cast<int>(cfg.get_int("synth.sample_rate", s.sample_rate));
  s.label_noise = cfg.get_double("synth.label_noise", s.label_noise);
  s.surrogate_embeddings = cfg.get_bool("synth.surrogate_embeddings", s.surrogate_embeddings);
  s.surrogate_dim = static_cast<int>(cfg.get_int("synth.surrogate_dim", s.surrogate_dim));
  s.validate();
  return s;
}

double intelligibility_label(double snr_db) { return 1.0 / (1.0 + std::exp(-(snr_db - 0.0) / 5.0)); }
double wer_label(double snr_db) { return 1.0 - 1.0 / (1.0 + std::exp(-(snr_db - 2.0) / 5.0)); }
double stoi_label(double snr_db) { return 1.0 / (1.0 + std::exp(-(snr_db + 2.0) / 6.0)); }

SynthUtterance synth_utterance(const SynthConfig& cfg, int index) {
  Rng rng(splitmix64(cfg.seed) + static_cast<uint64_t>(index));
  SynthUtterance u;
  char id[32];
  std::snprintf(id, sizeof(id), "utt%05d", index);
  u.utt_id = id;
  u.snr_db = rng.uniform(cfg.snr_db_lo, cfg.snr_db_hi);
  u.noise = cfg.noise_kinds[rng.below(cfg.noise_kinds.size())];

  const auto n = static_cast<size_t>(std::llround(cfg.duration_s * cfg.sample_rate));
  auto speech = harmonic_complex(rng, n, cfg.sample_rate, 4.0);
  normalize_rms(speech);
  const auto noise = make_noise(rng, u.noise, n, cfg.sample_rate);
  const double noise_gain = std::pow(10.0, -u.snr_db / 20.0);

  std::vector<double> mix(n);
  double peak = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mix[i] = speech[i] + noise_gain * noise[i];
    peak = std::max(peak, std::abs(mix[i]));
  }
  const double gain = peak > 0.0 ? 0.9 / peak : 1.0;
  for (double& v : mix) v = std::clamp(std::round(v * gain * 32768.0), -32768.0, 32767.0) / 32768.0;
  u.wave.samples = std::move(mix);
  u.wave.sample_rate = cfg.sample_rate;

  double intel = intelligibility_label(u.snr_db);
  double w = wer_label(u.snr_db);
  double s = stoi_label(u.snr_db);
  if (cfg.label_noise > 0.0) {
    intel = std::clamp(intel + cfg.label_noise * rng.normal(), 0.0, 1.0);
    w = std::clamp(w + cfg.label_noise * rng.normal(), 0.0, 1.0);
    s = std::clamp(s + cfg.label_noise * rng.normal(), 0.0, 1.0);
  }
  u.labels.intelligibility = intel;
  u.labels.wer = w;
  u.labels.stoi = s;
  return u;
}

EmbeddingSeq surrogate_embedding(const Waveform& wave, int dim) {
  StftConfig cfg{400, 320, 512, WindowKind::hann};
  cfg.win_length = wave.sample_rate / 40;
  cfg.hop_length = wave.sample_rate / 50;
  cfg.fft_size = 1;
  while (cfg.fft_size < cfg.win_length) cfg.fft_size *= 2;
  const auto ps = stft_power(wave, cfg);
  const auto bank = lfb_init(dim, cfg, wave.sample_rate, 1e-8);
  EmbeddingSeq seq;
  seq.vectors = lfb_forward(ps, bank).cast<float>();
  seq.frame_rate_mhz = hz_to_mhz(static_cast<double>(wave.sample_rate) / cfg.hop_length);
  seq.source_tag = "mel-surrogate-" + std::to_string(dim) + ":pretrained";
  return seq;
}

SynthResult gen_synthetic(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "wavs");
  SynthResult result;
  if (cfg.surrogate_embeddings) {
    result.embeddings_dir = out_dir / "embeddings";
    fs::create_directories(result.embeddings_dir);
  }

  nlohmann::ordered_json meta;
  meta["seed"] = cfg.seed;
  meta["sample_rate"] = cfg.sample_rate;
  meta["duration_s"] = cfg.duration_s;
  meta["snr_db_range"] = {cfg.snr_db_lo, cfg.snr_db_hi};
  meta["label_noise"] = cfg.label_noise;
  meta["label_functions"] = {
      {"intelligibility", "1/(1+exp(-(snr-0)/5))"},
      {"wer", "1-1/(1+exp(-(snr-2)/5))"},
      {"stoi", "1/(1+exp(-(snr+2)/6))"},
  };
  nlohmann::ordered_json utts = nlohmann::ordered_json::object();

  const int n_train = cfg.n_utts - cfg.n_test;
  for (int i = 0; i < cfg.n_utts; ++i) {
    SynthUtterance u = synth_utterance(cfg, i);
    ManifestRecord rec;
    rec.utt_id = u.utt_id;
    rec.wav_path = out_dir / "wavs" / (u.utt_id + ".wav");
    rec.labels = u.labels;
    rec.split = i < n_train ? Split::train : Split::test;
    write_wav(rec.wav_path, u.wave, WavEncoding::pcm16);
    if (cfg.surrogate_embeddings)
      write_embeddings(surrogate_embedding(u.wave, cfg.surrogate_dim),
                       result.embeddings_dir / (u.utt_id + ".mtie"));
    utts[u.utt_id] = {{"snr_db", u.snr_db}, {"noise", noise_name(u.noise)}};
    result.records.push_back(std::move(rec));
  }
  meta["utterances"] = std::move(utts);

  result.manifest_path = out_dir / "manifest.csv";
  write_manifest(result.manifest_path, result.records);
  result.metadata_path = out_dir / "synth_meta.json";
  std::ofstream f(result.metadata_path, std::ios::trunc);
  if (!f) throw Error("cannot write " + result.metadata_path.string());
  f << meta.dump(2) << "\n";
  return result;
}

}  // namespace mti
