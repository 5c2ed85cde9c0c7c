#pragma once

#include "mti/loss.hpp"
#include "mti/model.hpp"

#include <filesystem>

namespace mti {

/// Everything needed to rebuild a trained predictor.
struct Checkpoint {
  ModelConfig model;
  LossConfig loss;
  ParamStore params;
  NormStats norm;
  /// Free-form provenance entries (e.g. "train.best_epoch"); stored in the
  /// config record next to the model and loss keys.
  Config info;
};

/// MTIC archive, little-endian:
///   "MTIC" | u32 version=1
///   u32 len | config record (key=value lines)
///   u32 count | tensors
///   u32 count | normalization tensors
/// where a tensor is u32 name_len | name | "f64\0" | u32 ndim | u64 dims[ndim]
/// | row-major float64 payload.
inline constexpr uint32_t kMticVersion = 1;

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

/// Atomic: writes a sibling temp file, then renames it over `path`.
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace mti
