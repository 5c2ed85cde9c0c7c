#include "mti/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace mti {
namespace {

uint32_t le32(const unsigned char* p) {
  return uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) |
         (uint32_t(p[3]) << 24);
}
uint16_t le16(const unsigned char* p) { return uint16_t(p[0] | (p[1] << 8)); }

void put32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open wav file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::string where = path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw Error(where + ": not a RIFF/WAVE file");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const unsigned char* data = nullptr;
  size_t data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    uint32_t len = le32(chunk + 4);
    size_t body = pos + 8;
    size_t avail = std::min<size_t>(len, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw Error(where + ": truncated fmt chunk");
      format = le16(chunk + 8);
      channels = le16(chunk + 10);
      rate = le32(chunk + 12);
      bits = le16(chunk + 22);
      if (format == 0xFFFE && avail >= 26) format = le16(chunk + 32);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_len = avail;
    }
    pos = body + len + (len & 1);
  }
  if (format == 0 || data == nullptr) throw Error(where + ": missing fmt or data chunk");
  if (channels != 1) throw Error(where + ": only mono audio is supported");

  Waveform wave;
  wave.sample_rate = static_cast<int>(rate);
  if (format == 1 && bits == 16) {
    size_t n = data_len / 2;
    wave.samples.resize(n);
    for (size_t i = 0; i < n; ++i)
      wave.samples[i] = static_cast<int16_t>(le16(data + 2 * i)) / 32768.0;
  } else if (format == 3 && bits == 32) {
    size_t n = data_len / 4;
    wave.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      uint32_t raw = le32(data + 4 * i);
      float f;
      std::memcpy(&f, &raw, 4);
      wave.samples[i] = f;
    }
  } else {
    throw Error(where + ": unsupported sample format (need 16-bit PCM or 32-bit float)");
  }
  return wave;
}

void write_wav(const std::filesystem::path& path, const Waveform& wave,
               WavEncoding encoding) {
  const bool pcm = encoding == WavEncoding::pcm16;
  const uint16_t bits = pcm ? 16 : 32;
  const uint32_t data_len = static_cast<uint32_t>(wave.samples.size() * (bits / 8));
  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  put32(out, 36 + data_len);
  out += "WAVEfmt ";
  put32(out, 16);
  put16(out, pcm ? 1 : 3);
  put16(out, 1);
  put32(out, static_cast<uint32_t>(wave.sample_rate));
  put32(out, static_cast<uint32_t>(wave.sample_rate) * (bits / 8));
  put16(out, bits / 8);
  put16(out, bits);
  out += "data";
  put32(out, data_len);
  for (double s : wave.samples) {
    if (pcm) {
      long v = std::clamp(std::lround(s * 32768.0), -32768L, 32767L);
      put16(out, static_cast<uint16_t>(static_cast<int16_t>(v)));
    } else {
      float f = static_cast<float>(s);
      uint32_t raw;
      std::memcpy(&raw, &f, 4);
      put32(out, raw);
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write wav file " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error("failed writing wav file " + path.string());
}

}  // namespace mti
