#include "mti/embedding_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace mti {
namespace {

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

uint32_t get_u32(std::string_view bytes, size_t pos) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= uint32_t(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  return v;
}

using Kind = EmbeddingFormatError::Kind;

}  // namespace

void EmbeddingSeq::validate() const {
  if (vectors.rows() < 1 || vectors.cols() < 1)
    throw EmbeddingFormatError(Kind::invalid, "embedding sequence must be at least 1x1");
  if (!vectors.allFinite())
    throw EmbeddingFormatError(Kind::invalid, "embedding sequence has non-finite values");
  if (frame_rate_mhz == 0)
    throw EmbeddingFormatError(Kind::invalid, "embedding frame rate must be positive");
}

uint32_t hz_to_mhz(double hz) {
  if (!(hz > 0.0) || hz * 1000.0 > 4.0e9) throw Error("frame rate out of range");
  return static_cast<uint32_t>(std::llround(hz * 1000.0));
}

std::string encode_embeddings(const EmbeddingSeq& seq) {
  seq.validate();
  const auto rows = static_cast<uint32_t>(seq.vectors.rows());
  const auto cols = static_cast<uint32_t>(seq.vectors.cols());
  std::string out = "MTIE";
  put_u32(out, kMtieVersion);
  put_u32(out, rows);
  put_u32(out, cols);
  put_u32(out, seq.frame_rate_mhz);
  put_u32(out, static_cast<uint32_t>(seq.source_tag.size()));
  out += seq.source_tag;
  out.reserve(out.size() + size_t(rows) * cols * 4);
  for (uint32_t r = 0; r < rows; ++r) {
    for (uint32_t c = 0; c < cols; ++c) {
      uint32_t raw;
      float v = seq.vectors(r, c);
      std::memcpy(&raw, &v, 4);
      put_u32(out, raw);
    }
  }
  return out;
}

EmbeddingSeq decode_embeddings(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != "MTIE")
    throw EmbeddingFormatError(Kind::bad_magic, "not an MTIE file");
  if (bytes.size() < 24)
    throw EmbeddingFormatError(Kind::truncated, "truncated MTIE header");
  const uint32_t version = get_u32(bytes, 4);
  if (version != kMtieVersion)
    throw EmbeddingFormatError(Kind::unsupported_version,
                               "unsupported MTIE version " + std::to_string(version));
  const uint32_t rows = get_u32(bytes, 8);
  const uint32_t cols = get_u32(bytes, 12);
  EmbeddingSeq seq;
  seq.frame_rate_mhz = get_u32(bytes, 16);
  const uint32_t tag_len = get_u32(bytes, 20);
  size_t pos = 24;
  if (bytes.size() - pos < tag_len)
    throw EmbeddingFormatError(Kind::truncated, "truncated MTIE tag");
  seq.source_tag = std::string(bytes.substr(pos, tag_len));
  pos += tag_len;
  const uint64_t expected = uint64_t(rows) * cols * 4;
  if (bytes.size() - pos < expected)
    throw EmbeddingFormatError(Kind::truncated,
                               "truncated MTIE payload: expected " + std::to_string(expected) +
                                   " bytes, found " + std::to_string(bytes.size() - pos));
  if (bytes.size() - pos > expected)
    throw EmbeddingFormatError(Kind::invalid, "MTIE payload longer than header declares");
  seq.vectors.resize(rows, cols);
  for (uint32_t r = 0; r < rows; ++r) {
    for (uint32_t c = 0; c < cols; ++c) {
      uint32_t raw = get_u32(bytes, pos);
      pos += 4;
      std::memcpy(&seq.vectors(r, c), &raw, 4);
    }
  }
  seq.validate();
  return seq;
}

void write_embeddings(const EmbeddingSeq& seq, std::ostream& out) {
  const std::string bytes = encode_embeddings(seq);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing MTIE stream");
}

void write_embeddings(const EmbeddingSeq& seq, const std::filesystem::path& path) {
  const std::string bytes = encode_embeddings(seq);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

EmbeddingSeq read_embeddings(std::istream& in) {
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_embeddings(bytes);
}

EmbeddingSeq read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open embeddings file " + path.string());
  try {
    return read_embeddings(in);
  } catch (const EmbeddingFormatError& e) {
    throw EmbeddingFormatError(e.kind(), path.string() + ": " + e.what());
  }
}

Eigen::Index aligned_source_index(Eigen::Index f, uint32_t source_rate_mhz,
                                  uint32_t target_rate_mhz, Eigen::Index source_frames) {
  const uint64_t num = uint64_t(f) * source_rate_mhz;
  const uint64_t den = target_rate_mhz;
  uint64_t q = num / den;
  const uint64_t r = num % den;
  if (2 * r > den || (2 * r == den && (q & 1))) ++q;
  return std::min<Eigen::Index>(static_cast<Eigen::Index>(q), source_frames - 1);
}

Matrix align_to_frames(const EmbeddingSeq& seq, Eigen::Index target_frames,
                       uint32_t target_rate_mhz) {
  if (seq.vectors.rows() < 1) throw Error("align_to_frames: empty embedding sequence");
  if (target_frames < 1) throw Error("align_to_frames: target frame count must be >= 1");
  if (target_rate_mhz == 0) throw Error("align_to_frames: target rate must be positive");
  Matrix out(target_frames, seq.vectors.cols());
  for (Eigen::Index f = 0; f < target_frames; ++f) {
    const Eigen::Index src = aligned_source_index(f, seq.frame_rate_mhz, target_rate_mhz,
                                                  seq.vectors.rows());
    out.row(f) = seq.vectors.row(src).cast<double>();
  }
  return out;
}

Matrix align_to_frames(const EmbeddingSeq& seq, Eigen::Index target_frames,
                       double target_rate_hz) {
  return align_to_frames(seq, target_frames, hz_to_mhz(target_rate_hz));
}

}  // namespace mti
