#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lgtse/common/error.hpp"
#include "lgtse/dsp/waveform.hpp"

namespace lgtse {

// Mono WAV I/O. 16-bit PCM is the canonical on-disk format (samples map to
// [-1, 1) by division by 32768); IEEE float32 is also read for robustness.
namespace wavio {

namespace detail {

inline void put_u32(std::ofstream& f, std::uint32_t v) {
  char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
  f.write(b, 4);
}
inline void put_u16(std::ofstream& f, std::uint16_t v) {
  char b[2] = {char(v & 0xff), char((v >> 8) & 0xff)};
  f.write(b, 2);
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}
inline std::uint16_t get_u16(const unsigned char* p) {
  return std::uint16_t(p[0]) | (std::uint16_t(p[1]) << 8);
}

}  // namespace detail

inline void write(const std::filesystem::path& path, const Waveform& w) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("wav write: cannot open " + path.string());

  const std::uint32_t n = static_cast<std::uint32_t>(w.size());
  const std::uint32_t data_bytes = n * 2;
  f.write("RIFF", 4);
  detail::put_u32(f, 36 + data_bytes);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  detail::put_u32(f, 16);
  detail::put_u16(f, 1);  // PCM
  detail::put_u16(f, 1);  // mono
  detail::put_u32(f, static_cast<std::uint32_t>(w.sample_rate));
  detail::put_u32(f, static_cast<std::uint32_t>(w.sample_rate) * 2);
  detail::put_u16(f, 2);
  detail::put_u16(f, 16);
  f.write("data", 4);
  detail::put_u32(f, data_bytes);
  for (double v : w.samples) {
    double s = v * 32768.0;
    long q = std::lround(s);
    if (q > 32767) q = 32767;
    if (q < -32768) q = -32768;
    const std::int16_t i16 = static_cast<std::int16_t>(q);
    detail::put_u16(f, static_cast<std::uint16_t>(i16));
  }
  if (!f) throw IoError("wav write: failed writing " + path.string());
}

inline Waveform read(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IngestError("wav read: cannot open " + path.string());
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
  if (raw.size() < 44 || std::memcmp(raw.data(), "RIFF", 4) != 0 ||
      std::memcmp(raw.data() + 8, "WAVE", 4) != 0)
    throw IngestError("wav read: not a RIFF/WAVE file: " + path.string());

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t data_off = 0, data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= raw.size()) {
    const char* id = reinterpret_cast<const char*>(raw.data() + pos);
    const std::uint32_t len = detail::get_u32(raw.data() + pos + 4);
    if (std::memcmp(id, "fmt ", 4) == 0 && pos + 8 + 16 <= raw.size()) {
      format = detail::get_u16(raw.data() + pos + 8);
      channels = detail::get_u16(raw.data() + pos + 10);
      rate = detail::get_u32(raw.data() + pos + 12);
      bits = detail::get_u16(raw.data() + pos + 22);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = pos + 8;
      data_len = std::min<std::size_t>(len, raw.size() - data_off);
    }
    pos += 8 + len + (len & 1);
  }
  if (data_off == 0) throw IngestError("wav read: no data chunk: " + path.string());
  if (channels != 1) throw IngestError("wav read: expected mono: " + path.string());

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  if (format == 1 && bits == 16) {
    const std::size_t n = data_len / 2;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::int16_t s =
          static_cast<std::int16_t>(detail::get_u16(raw.data() + data_off + 2 * i));
      w.samples[i] = static_cast<double>(s) / 32768.0;
    }
  } else if (format == 3 && bits == 32) {
    const std::size_t n = data_len / 4;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t u = detail::get_u32(raw.data() + data_off + 4 * i);
      float fv;
      std::memcpy(&fv, &u, 4);
      w.samples[i] = static_cast<double>(fv);
    }
  } else {
    throw IngestError("wav read: unsupported format: " + path.string());
  }
  return w;
}

}  // namespace wavio
}  // namespace lgtse
