#include "mti/dataset.hpp"

#include "mti/wav.hpp"

namespace mti {

UtteranceInput prepare_input(const Waveform& wave, const FeatureLayout& layout,
                             const EmbeddingSeq* embeddings) {
  if (wave.sample_rate != layout.sample_rate)
    throw Error("sample rate " + std::to_string(wave.sample_rate) + " Hz does not match the " +
                std::to_string(layout.sample_rate) + " Hz model input; resample first");
  UtteranceInput input;
  PowerSpectrogram ps = stft_power(wave, layout.stft);
  if (layout.branches.contains(Branch::SSL)) {
    if (!embeddings) throw Error("ssl branch active but no embeddings supplied");
    if (embeddings->vectors.cols() != layout.ssl_dim)
      throw Error("embedding dim " + std::to_string(embeddings->vectors.cols()) +
                  " does not match model ssl_dim " + std::to_string(layout.ssl_dim));
    input.ssl = align_to_frames(*embeddings, ps.frame_count(), ps.frame_rate);
  }
  input.power = std::move(ps.frames);
  return input;
}

std::vector<TrainItem> load_items(const std::vector<ManifestRecord>& records,
                                  const FeatureLayout& layout,
                                  const std::filesystem::path& embeddings_dir) {
  const bool ssl = layout.branches.contains(Branch::SSL);
  if (ssl && embeddings_dir.empty())
    throw Error("ssl branch active: an embeddings directory is required");
  std::vector<TrainItem> items;
  items.reserve(records.size());
  for (const auto& rec : records) {
    TrainItem item;
    item.utt_id = rec.utt_id;
    item.labels = rec.labels;
    const Waveform wave = read_wav(rec.wav_path);
    try {
      if (ssl) {
        const EmbeddingSeq emb = read_embeddings(embeddings_dir / (rec.utt_id + ".mtie"));
        item.input = prepare_input(wave, layout, &emb);
      } else {
        item.input = prepare_input(wave, layout, nullptr);
      }
    } catch (const Error& e) {
      throw Error(rec.utt_id + ": " + e.what());
    }
    items.push_back(std::move(item));
  }
  return items;
}

int probe_embedding_dim(const std::vector<ManifestRecord>& records,
                        const std::filesystem::path& embeddings_dir) {
  if (records.empty()) throw Error("cannot probe embedding dim: no records");
  const EmbeddingSeq emb = read_embeddings(embeddings_dir / (records.front().utt_id + ".mtie"));
  return static_cast<int>(emb.vectors.cols());
}

}  // namespace mti
