#include "mpa/dsp/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>

#include "mpa/error.hpp"
#include "mpa/io/atomic_file.hpp"

namespace mpa::dsp {

namespace {

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
void put32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
std::int16_t to_pcm16(float x) {
  const float c = std::clamp(x, -1.0f, 1.0f);
  return static_cast<std::int16_t>(std::lround(std::min(c * 32768.0f, 32767.0f)));
}

void put16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  const std::string where = " in '" + path.string() + "'";
  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0) {
    throw FormatError("not a RIFF/WAVE file" + where);
  }
  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t off = 12;
  while (off + 8 <= n) {
    const std::uint32_t size = le32(p + off + 4);
    const std::size_t body = off + 8;
    if (body + size > n) throw FormatError("truncated chunk" + where);
    if (std::memcmp(p + off, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError("short fmt chunk" + where);
      const std::uint16_t format = le16(p + body);
      channels = le16(p + body + 2);
      rate = le32(p + body + 4);
      bits = le16(p + body + 14);
      if (format != 1) throw FormatError("only PCM WAV is supported" + where);
      if (bits != 16) throw FormatError("only 16-bit PCM is supported" + where);
      if (channels != 1) throw FormatError("only mono WAV is supported" + where);
      have_fmt = true;
    } else if (std::memcmp(p + off, "data", 4) == 0) {
      if (!have_fmt) throw FormatError("data chunk before fmt chunk" + where);
      Waveform w;
      w.sample_rate_hz = static_cast<int>(rate);
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(le16(p + body + 2 * i));
        w.samples[i] = static_cast<float>(v) / 32768.0f;
      }
      if (w.sample_rate_hz <= 0) throw FormatError("invalid sample rate" + where);
      return w;
    }
    off = body + size + (size & 1u);
  }
  throw FormatError("no data chunk" + where);
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  w.validate();
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  std::string s;
  s.reserve(44 + data_bytes);
  s += "RIFF";
  put32(s, 36 + data_bytes);
  s += "WAVEfmt ";
  put32(s, 16);
  put16(s, 1);
  put16(s, 1);
  put32(s, static_cast<std::uint32_t>(w.sample_rate_hz));
  put32(s, static_cast<std::uint32_t>(w.sample_rate_hz) * 2);
  put16(s, 2);
  put16(s, 16);
  s += "data";
  put32(s, data_bytes);
  for (float x : w.samples) put16(s, static_cast<std::uint16_t>(to_pcm16(x)));
  io::write_file_atomic(path, s);
}

Waveform pcm16_round_trip(const Waveform& w) {
  Waveform out{std::vector<float>(w.samples.size()), w.sample_rate_hz};
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    out.samples[i] = static_cast<float>(to_pcm16(w.samples[i])) / 32768.0f;
  return out;
}

}  // namespace mpa::dsp
