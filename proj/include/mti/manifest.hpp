#pragma once

#include "mti/loss.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mti {

enum class Split { train, test };

struct ManifestRecord {
  std::string utt_id;
  std::filesystem::path wav_path;  // resolved against the manifest directory
  UtteranceLabels labels;
  Split split = Split::train;
};

struct Manifest {
  std::vector<ManifestRecord> records;
  std::vector<std::string> warnings;

  std::vector<ManifestRecord> with_split(Split s) const;
};

/// CSV with header utt_id,wav_path,intelligibility,wer,stoi,split. Empty
/// label cells mean "absent". Out-of-range WER values are clamped to [0, 1]
/// with a warning; other out-of-range labels, duplicate ids, missing
/// columns and missing wav files are errors. Relative wav paths are
/// resolved against the manifest's directory unless `check_wavs` is false.
Manifest load_manifest(const std::filesystem::path& path, bool check_wavs = true);

/// Writes records with wav paths relative to `path`'s directory when possible.
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);

/// Seed-deterministic partition of 0..n-1 into (kept, held_out) with
/// round(n * fraction) held-out items, both sides non-empty.
std::pair<std::vector<size_t>, std::vector<size_t>> split_indices(size_t n, double fraction,
                                                                  uint64_t seed);

std::pair<std::vector<ManifestRecord>, std::vector<ManifestRecord>> split_train_val(
    const std::vector<ManifestRecord>& records, double fraction, uint64_t seed);

}  // namespace mti
