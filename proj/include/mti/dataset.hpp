#pragma once

#include "mti/embedding_io.hpp"
#include "mti/manifest.hpp"
#include "mti/model.hpp"
#include "mti/training.hpp"

#include <filesystem>

namespace mti {

/// STFT power spectrogram plus, when the layout uses SSL, embeddings
/// aligned to the STFT frame grid. Rejects sample rates other than the
/// layout's.
UtteranceInput prepare_input(const Waveform& wave, const FeatureLayout& layout,
                             const EmbeddingSeq* embeddings);

/// Loads wavs (and <embeddings_dir>/<utt_id>.mtie when SSL is active) for
/// every record.
std::vector<TrainItem> load_items(const std::vector<ManifestRecord>& records,
                                  const FeatureLayout& layout,
                                  const std::filesystem::path& embeddings_dir);

/// Embedding dimension found in <dir>/<utt_id>.mtie for the first record.
int probe_embedding_dim(const std::vector<ManifestRecord>& records,
                        const std::filesystem::path& embeddings_dir);

}  // namespace mti
