#pragma once

#include "mti/types.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

namespace mti {

using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic>;

/// Frame-level embedding sequence as exchanged in MTIE files.
struct EmbeddingSeq {
  FloatMatrix vectors;  // T x dim
  uint32_t frame_rate_mhz = 0;
  std::string source_tag;

  double frame_rate() const { return frame_rate_mhz / 1000.0; }
  void validate() const;
};

/// MTIE layout (all integers little-endian u32):
///   "MTIE" | version=1 | frame_count | dim | frame_rate_mhz | tag_len | tag
///   followed by frame_count*dim float32 values, row-major.
inline constexpr uint32_t kMtieVersion = 1;

class EmbeddingFormatError : public Error {
 public:
  enum class Kind { bad_magic, unsupported_version, truncated, invalid };
  EmbeddingFormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::string encode_embeddings(const EmbeddingSeq& seq);
EmbeddingSeq decode_embeddings(std::string_view bytes);

void write_embeddings(const EmbeddingSeq& seq, std::ostream& out);
/// Writes to a sibling temp file and renames it into place.
void write_embeddings(const EmbeddingSeq& seq, const std::filesystem::path& path);

EmbeddingSeq read_embeddings(std::istream& in);
EmbeddingSeq read_embeddings(const std::filesystem::path& path);

/// Nearest-index resampling onto a target frame grid: output row f copies
/// source row round_half_even(f * src_rate / target_rate), clamped to
/// [0, T-1]. The index is computed exactly in integer milli-Hz arithmetic.
Matrix align_to_frames(const EmbeddingSeq& seq, Eigen::Index target_frames,
                       uint32_t target_rate_mhz);
Matrix align_to_frames(const EmbeddingSeq& seq, Eigen::Index target_frames,
                       double target_rate_hz);

/// Source row used for target frame f (exposed for the sidecar contract).
Eigen::Index aligned_source_index(Eigen::Index f, uint32_t source_rate_mhz,
                                  uint32_t target_rate_mhz, Eigen::Index source_frames);

uint32_t hz_to_mhz(double hz);

}  // namespace mti
