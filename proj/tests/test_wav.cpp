#include "mti/wav.hpp"

#include "support.hpp"

#include <doctest.h>

#include <fstream>

using namespace mti;

TEST_CASE("16-bit PCM round-trips samples already on the 16-bit grid") {
  testing::TempDir dir("wav");
  Waveform w;
  w.sample_rate = 16000;
  for (int i = -5; i < 5; ++i) w.samples.push_back(i * 1000 / 32768.0);
  w.samples.push_back(-1.0);
  write_wav(dir / "a.wav", w, WavEncoding::pcm16);
  const Waveform back = read_wav(dir / "a.wav");
  CHECK(back.sample_rate == 16000);
  CHECK(back.samples == w.samples);
}

TEST_CASE("float32 encoding round-trips float values exactly") {
  testing::TempDir dir("wav");
  Waveform w;
  w.sample_rate = 8000;
  for (int i = 0; i < 100; ++i) w.samples.push_back(static_cast<float>(std::sin(i * 0.1) * 0.7));
  write_wav(dir / "f.wav", w, WavEncoding::float32);
  const Waveform back = read_wav(dir / "f.wav");
  CHECK(back.sample_rate == 8000);
  CHECK(back.samples == w.samples);
}

TEST_CASE("pcm16 clamps out-of-range samples") {
  testing::TempDir dir("wav");
  Waveform w;
  w.samples = {2.0, -2.0, 0.5};
  write_wav(dir / "c.wav", w, WavEncoding::pcm16);
  const Waveform back = read_wav(dir / "c.wav");
  CHECK(back.samples[0] == 32767 / 32768.0);
  CHECK(back.samples[1] == -1.0);
  CHECK(back.samples[2] == 0.5);
}

TEST_CASE("unreadable and non-wav files are errors") {
  testing::TempDir dir("wav");
  CHECK_THROWS_AS(read_wav(dir / "missing.wav"), Error);
  std::ofstream(dir / "junk.wav") << "this is not a wav file at all";
  CHECK_THROWS_WITH_AS(read_wav(dir / "junk.wav"), doctest::Contains("RIFF"), Error);
}
